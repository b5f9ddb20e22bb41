//! Lexical-overlap, diversity and source-support metrics.
//!
//! Functions take token sequences (already lowercased by the tokenizer) and
//! are generic over the token type so they apply to ids and strings alike.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn ngram_counts<T: Hash + Eq>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn f1(overlap: usize, cand_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 || cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand_total as f64;
    let r = overlap as f64 / ref_total as f64;
    100.0 * 2.0 * p * r / (p + r)
}

fn clipped_overlap<T: Hash + Eq>(cand: &HashMap<&[T], usize>, refs: &HashMap<&[T], usize>) -> usize {
    cand.iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum()
}

/// ROUGE-N F1 as a percentage.
pub fn rouge_n_f1<T: Hash + Eq>(candidate: &[T], reference: &[T], n: usize) -> f64 {
    let c = ngram_counts(candidate, n);
    let r = ngram_counts(reference, n);
    let overlap = clipped_overlap(&c, &r);
    f1(overlap, c.values().sum(), r.values().sum())
}

pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 (sentence-level LCS, β = 1) as a percentage.
pub fn rouge_l_f1<T: Eq>(candidate: &[T], reference: &[T]) -> f64 {
    f1(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// Distinct n-grams over total n-grams, pooled over all summaries; 0 when
/// there are no n-grams.
pub fn distinct_n<T: Hash + Eq, S: AsRef<[T]>>(summaries: &[S], n: usize) -> f64 {
    let mut seen = HashSet::new();
    let mut total = 0usize;
    for s in summaries {
        let s = s.as_ref();
        if n > 0 && s.len() >= n {
            for gram in s.windows(n) {
                seen.insert(gram);
                total += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        seen.len() as f64 / total as f64
    }
}

/// Number of distinct texts after whitespace normalization.
pub fn unique_count<S: AsRef<str>>(texts: &[S]) -> usize {
    texts
        .iter()
        .map(|t| t.as_ref().split_whitespace().collect::<Vec<_>>().join(" "))
        .collect::<HashSet<_>>()
        .len()
}

/// Percentage of summaries in which some token outside the frequent set
/// occurs at least twice.
pub fn repetition_rate<T: Hash + Eq, S: AsRef<[T]>>(summaries: &[S], is_frequent: impl Fn(&T) -> bool) -> f64 {
    if summaries.is_empty() {
        return 0.0;
    }
    let repeating = summaries
        .iter()
        .filter(|s| {
            let mut counts: HashMap<&T, usize> = HashMap::new();
            s.as_ref().iter().filter(|t| !is_frequent(t)).any(|t| {
                let c = counts.entry(t).or_insert(0);
                *c += 1;
                *c >= 2
            })
        })
        .count();
    100.0 * repeating as f64 / summaries.len() as f64
}

/// Clipped unigram precision of `candidate` against `document`, as a
/// percentage; 0 for an empty candidate.
pub fn r1_precision_vs_doc<T: Hash + Eq>(candidate: &[T], document: &[T]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let c = ngram_counts(candidate, 1);
    let d = ngram_counts(document, 1);
    100.0 * clipped_overlap(&c, &d) as f64 / candidate.len() as f64
}

/// Content tokens (outside the frequent set) of `candidate`, and how many of
/// them occur in `document`.
pub fn support_counts<T: Hash + Eq>(
    candidate: &[T],
    document: &[T],
    is_frequent: impl Fn(&T) -> bool,
) -> (usize, usize) {
    let doc: HashSet<&T> = document.iter().collect();
    let content: Vec<&T> = candidate.iter().filter(|t| !is_frequent(t)).collect();
    let supported = content.iter().filter(|t| doc.contains(*t)).count();
    (supported, content.len())
}

/// One evaluated input: its document, reference and generated samples, as
/// lowercased word tokens.
#[derive(Clone, Debug, Default)]
pub struct EvalItem {
    pub document: Vec<String>,
    pub reference: Vec<String>,
    pub samples: Vec<Vec<String>>,
    pub peakiness: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_inputs: usize,
    pub num_samples: usize,
    pub rouge1_f1: f64,
    pub rouge2_f1: f64,
    #[serde(rename = "rougeL_f1")]
    pub rouge_l_f1: f64,
    pub distinct1: f64,
    pub distinct2: f64,
    pub distinct3: f64,
    pub unique: f64,
    pub repetition_pct: f64,
    pub mean_len: f64,
    pub r1_precision_vs_doc: f64,
    /// Micro-averaged share of content tokens that occur in the source.
    pub keyword_precision: f64,
    pub peakiness_mean: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl MetricsReport {
    /// Sample-level scores are averaged over all samples; Unique is the
    /// mean per-input count.
    pub fn compute(items: &[EvalItem], frequent: &HashSet<String>) -> Result<Self> {
        if items.is_empty() || items.iter().any(|i| i.samples.is_empty()) {
            return Err(Error::Input("metrics need at least one sample per input".into()));
        }
        let pairs = || items.iter().flat_map(|i| i.samples.iter().map(move |s| (i, s)));
        let all: Vec<&Vec<String>> = pairs().map(|(_, s)| s).collect();
        let is_frequent = |t: &String| frequent.contains(t);
        let (supported, content) = pairs()
            .map(|(i, s)| support_counts(s, &i.document, is_frequent))
            .fold((0, 0), |(a, b), (x, y)| (a + x, b + y));
        let peaks: Vec<f64> = items.iter().filter_map(|i| i.peakiness).collect();
        Ok(MetricsReport {
            num_inputs: items.len(),
            num_samples: all.len(),
            rouge1_f1: mean(pairs().map(|(i, s)| rouge_n_f1(s, &i.reference, 1))),
            rouge2_f1: mean(pairs().map(|(i, s)| rouge_n_f1(s, &i.reference, 2))),
            rouge_l_f1: mean(pairs().map(|(i, s)| rouge_l_f1(s, &i.reference))),
            distinct1: distinct_n(&all, 1),
            distinct2: distinct_n(&all, 2),
            distinct3: distinct_n(&all, 3),
            unique: mean(items.iter().map(|i| {
                let texts: Vec<String> = i.samples.iter().map(|s| s.join(" ")).collect();
                unique_count(&texts) as f64
            })),
            repetition_pct: repetition_rate(&all, is_frequent),
            mean_len: mean(all.iter().map(|s| s.len() as f64)),
            r1_precision_vs_doc: mean(pairs().map(|(i, s)| r1_precision_vs_doc(s, &i.document))),
            keyword_precision: if content == 0 {
                0.0
            } else {
                100.0 * supported as f64 / content as f64
            },
            peakiness_mean: (!peaks.is_empty()).then(|| mean(peaks.into_iter())),
        })
    }

    /// Flat `name value` table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let rows: [(&str, f64); 13] = [
            ("num_inputs", self.num_inputs as f64),
            ("num_samples", self.num_samples as f64),
            ("rouge1_f1", self.rouge1_f1),
            ("rouge2_f1", self.rouge2_f1),
            ("rougeL_f1", self.rouge_l_f1),
            ("distinct1", self.distinct1),
            ("distinct2", self.distinct2),
            ("distinct3", self.distinct3),
            ("unique", self.unique),
            ("repetition_pct", self.repetition_pct),
            ("mean_len", self.mean_len),
            ("r1_precision_vs_doc", self.r1_precision_vs_doc),
            ("keyword_precision", self.keyword_precision),
        ];
        for (name, v) in rows {
            let _ = writeln!(out, "{name:<22}{v:.4}");
        }
        match self.peakiness_mean {
            Some(p) => writeln!(out, "{:<22}{p:.4}", "peakiness_mean"),
            None => writeln!(out, "{:<22}-", "peakiness_mean"),
        }
        .expect("write to string");
        out
    }
}
