//! JSON Lines prediction records.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::search::Hypothesis;
use crate::data::vocab::{detokenize, Vocabulary};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: usize,
    pub strategy: String,
    pub sample_index: usize,
    pub tokens: Vec<usize>,
    pub text: String,
    pub logprob: f64,
}

impl Prediction {
    pub fn new(id: usize, strategy: &str, sample_index: usize, hyp: &Hypothesis, vocab: &Vocabulary) -> Self {
        Prediction {
            id,
            strategy: strategy.to_string(),
            sample_index,
            tokens: hyp.tokens.clone(),
            text: detokenize(&hyp.tokens, vocab),
            logprob: hyp.logprob,
        }
    }
}

pub fn save_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in predictions {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Groups predictions by input id, preserving sample order.
pub fn group_by_id(predictions: &[Prediction]) -> Vec<(usize, Vec<&Prediction>)> {
    let mut groups: std::collections::BTreeMap<usize, Vec<&Prediction>> = Default::default();
    for p in predictions {
        groups.entry(p.id).or_default().push(p);
    }
    for g in groups.values_mut() {
        g.sort_by_key(|p| p.sample_index);
    }
    groups.into_iter().collect()
}
