//! Synthetic topical summarization task.
//!
//! Each topic owns a name token and a keyword lexicon; distractor tokens
//! belong to no topic. A document holds its topic's name, two of its
//! keywords and distractor filler in random order. The summary is
//! `topic <name> about <kw1> <kw2>`, keywords in document order, so every
//! summary content token is supported by the document.

use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::{save_jsonl, RawExample};
use crate::error::{Error, Result};
use crate::kv;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTaskConfig {
    pub num_topics: usize,
    pub keywords_per_topic: usize,
    pub distractor_vocab_size: usize,
    pub doc_len: usize,
    pub num_examples: usize,
    pub seed: u64,
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        SyntheticTaskConfig {
            num_topics: 4,
            keywords_per_topic: 6,
            distractor_vocab_size: 14,
            doc_len: 8,
            num_examples: 32,
            seed: 0,
        }
    }
}

/// A generated pair and the topic it was drawn from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticExample {
    pub topic: usize,
    pub raw: RawExample,
}

pub const TEMPLATE_TOPIC: &str = "topic";
pub const TEMPLATE_ABOUT: &str = "about";

pub fn topic_name(topic: usize) -> String {
    format!("subject{topic}")
}

pub fn keyword(topic: usize, j: usize) -> String {
    format!("kw{topic}x{j}")
}

pub fn distractor(j: usize) -> String {
    format!("filler{j}")
}

impl SyntheticTaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_topics == 0 || self.keywords_per_topic < 2 || self.num_examples == 0 {
            return Err(Error::Config(
                "synthetic task needs topics, at least 2 keywords per topic and examples".into(),
            ));
        }
        if self.doc_len < 3 {
            return Err(Error::Config("doc_len must be at least 3".into()));
        }
        if self.doc_len > 3 && self.distractor_vocab_size == 0 {
            return Err(Error::Config("doc_len > 3 needs distractor tokens".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        [
            ("num_topics", self.num_topics.to_string()),
            ("keywords_per_topic", self.keywords_per_topic.to_string()),
            ("distractor_vocab_size", self.distractor_vocab_size.to_string()),
            ("doc_len", self.doc_len.to_string()),
            ("num_examples", self.num_examples.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Applies one entry; returns `false` for keys it does not own. The
    /// seed is shared with other sections and set by the caller.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "num_topics" => self.num_topics = kv::parse_value(key, value)?,
            "keywords_per_topic" => self.keywords_per_topic = kv::parse_value(key, value)?,
            "distractor_vocab_size" => self.distractor_vocab_size = kv::parse_value(key, value)?,
            "doc_len" => self.doc_len = kv::parse_value(key, value)?,
            "num_examples" => self.num_examples = kv::parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Number of distinct tokens the task can produce.
    pub fn lexicon_size(&self) -> usize {
        2 + self.num_topics * (1 + self.keywords_per_topic) + self.distractor_vocab_size
    }
}

pub fn synth_generate(cfg: &SyntheticTaskConfig) -> Result<Vec<SyntheticExample>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let distractors: Vec<String> = (0..cfg.distractor_vocab_size).map(distractor).collect();
    let mut out = Vec::with_capacity(cfg.num_examples);
    for _ in 0..cfg.num_examples {
        let topic = rng.random_range(0..cfg.num_topics);
        let picks = rand::seq::index::sample(&mut rng, cfg.keywords_per_topic, 2);
        let mut doc: Vec<String> = vec![topic_name(topic)];
        doc.extend(picks.iter().map(|j| keyword(topic, j)));
        for _ in 3..cfg.doc_len {
            doc.push(distractors.choose(&mut rng).expect("non-empty").clone());
        }
        doc.shuffle(&mut rng);
        let kws: Vec<&String> = doc.iter().filter(|w| w.starts_with("kw")).collect();
        let summary = format!(
            "{TEMPLATE_TOPIC} {} {TEMPLATE_ABOUT} {} {}",
            topic_name(topic),
            kws[0],
            kws[1]
        );
        out.push(SyntheticExample {
            topic,
            raw: RawExample {
                document: doc.join(" "),
                summary,
            },
        });
    }
    Ok(out)
}

/// Writes the corpus as JSON Lines plus a `<path>.manifest` sidecar with
/// the generator configuration.
pub fn write_corpus(path: &Path, cfg: &SyntheticTaskConfig, examples: &[SyntheticExample]) -> Result<()> {
    let raw: Vec<RawExample> = examples.iter().map(|e| e.raw.clone()).collect();
    save_jsonl(path, &raw)?;
    let mut manifest = path.as_os_str().to_owned();
    manifest.push(".manifest");
    fs::write(manifest, kv::render(&cfg.to_kv()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn summaries_are_supported_by_documents() {
        let data = synth_generate(&SyntheticTaskConfig::default()).unwrap();
        assert_eq!(data.len(), 32);
        for ex in &data {
            let doc: HashSet<&str> = ex.raw.document.split(' ').collect();
            assert_eq!(ex.raw.document.split(' ').count(), 8);
            for w in ex.raw.summary.split(' ') {
                if w != TEMPLATE_TOPIC && w != TEMPLATE_ABOUT {
                    assert!(doc.contains(w), "{w} not in {}", ex.raw.document);
                }
            }
        }
    }

    #[test]
    fn seeds_change_the_corpus() {
        let a = synth_generate(&SyntheticTaskConfig::default()).unwrap();
        let b = synth_generate(&SyntheticTaskConfig {
            seed: 1,
            ..SyntheticTaskConfig::default()
        })
        .unwrap();
        assert_ne!(a, b);
        assert_eq!(a, synth_generate(&SyntheticTaskConfig::default()).unwrap());
    }

    #[test]
    fn topics_do_not_share_content_tokens() {
        let data = synth_generate(&SyntheticTaskConfig {
            num_examples: 200,
            ..SyntheticTaskConfig::default()
        })
        .unwrap();
        let content = |s: &str| -> HashSet<String> {
            s.split(' ')
                .filter(|w| *w != TEMPLATE_TOPIC && *w != TEMPLATE_ABOUT)
                .map(str::to_string)
                .collect()
        };
        for a in &data {
            for b in data.iter().filter(|b| b.topic != a.topic) {
                assert!(content(&a.raw.summary).is_disjoint(&content(&b.raw.summary)));
            }
        }
    }
}
