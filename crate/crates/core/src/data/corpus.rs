//! JSON Lines corpora, truncation and batching.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{self, tokenize, Vocabulary, EOS};
use crate::fame::FrequentSet;
use crate::error::{Error, Result};

/// One corpus line: `{"document": ..., "summary": ...}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExample {
    pub document: String,
    pub summary: String,
}

/// A tokenized training pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub document: Vec<usize>,
    /// Ends with eos.
    pub reference: Vec<usize>,
}

pub fn load_jsonl(path: &Path) -> Result<Vec<RawExample>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(ex);
    }
    Ok(out)
}

pub fn save_jsonl(path: &Path, examples: &[RawExample]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for ex in examples {
        serde_json::to_writer(&mut f, ex)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Builds the vocabulary and frequent set from the documents and summaries
/// of a corpus.
pub fn vocab_from_corpus(raw: &[RawExample], size: usize, freq_set_size: usize) -> Result<(Vocabulary, FrequentSet)> {
    let words: Vec<Vec<String>> = raw
        .iter()
        .flat_map(|r| [vocab::words(&r.document), vocab::words(&r.summary)])
        .collect();
    vocab::build_vocab(words.iter().map(|w| w.iter().map(String::as_str)), size, freq_set_size)
}

/// Tokenizes a pair, keeping the first `max_input_len` document tokens and
/// the first `max_output_len - 1` summary tokens followed by eos.
pub fn to_example(raw: &RawExample, vocab: &Vocabulary, max_input_len: usize, max_output_len: usize) -> Result<Example> {
    let mut document = tokenize(&raw.document, vocab);
    if document.is_empty() {
        return Err(Error::Input("empty document".into()));
    }
    document.truncate(max_input_len);
    let mut reference = tokenize(&raw.summary, vocab);
    reference.truncate(max_output_len.saturating_sub(1));
    reference.push(EOS);
    Ok(Example { document, reference })
}

pub fn to_examples(raw: &[RawExample], vocab: &Vocabulary, max_input_len: usize, max_output_len: usize) -> Result<Vec<Example>> {
    raw.iter()
        .map(|r| to_example(r, vocab, max_input_len, max_output_len))
        .collect()
}

/// Splits example indices into batches; with a seed the order is shuffled
/// deterministically first. Every index appears in exactly one batch.
pub fn make_batches(num_examples: usize, batch_size: usize, shuffle_seed: Option<u64>) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..num_examples).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::vocab::build_vocab;

    fn vocab() -> Vocabulary {
        let words: Vec<String> = (0..120).map(|i| format!("w{i}")).collect();
        build_vocab([words.iter().map(String::as_str)], 200, 2).unwrap().0
    }

    #[test]
    fn truncation_keeps_prefix() {
        let v = vocab();
        let doc: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
        let raw = RawExample {
            document: doc.join(" "),
            summary: "w1 w2 w3 w4 w5".into(),
        };
        let ex = to_example(&raw, &v, 64, 4).unwrap();
        assert_eq!(ex.document.len(), 64);
        assert_eq!(ex.document[0], v.id("w0").unwrap());
        assert_eq!(ex.document[63], v.id("w63").unwrap());
        assert_eq!(ex.reference, vec![v.id("w1").unwrap(), v.id("w2").unwrap(), v.id("w3").unwrap(), EOS]);
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        fs::write(&path, "").unwrap();
        assert!(load_jsonl(&path).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(&path, "{\"document\": \"a\", \"summary\": \"b\"}\n{\"document\": 3}\n").unwrap();
        match load_jsonl(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let data = vec![
            RawExample {
                document: "a \"quoted\" doc".into(),
                summary: "s".into(),
            },
            RawExample {
                document: "ünïcode".into(),
                summary: "".into(),
            },
        ];
        save_jsonl(&path, &data).unwrap();
        assert_eq!(load_jsonl(&path).unwrap(), data);
    }

    #[test]
    fn batches_partition_indices() {
        let batches = make_batches(10, 3, Some(4)).unwrap();
        assert_eq!(batches.len(), 4);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(batches, make_batches(10, 3, Some(4)).unwrap());
        assert_eq!(make_batches(4, 2, None).unwrap(), vec![vec![0, 1], vec![2, 3]]);
    }
}
