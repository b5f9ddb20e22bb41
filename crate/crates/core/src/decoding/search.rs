//! Model-agnostic search over a next-token scorer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sampling;
use crate::data::vocab::EOS;
use crate::error::{Error, Result};

/// A generated sequence. `tokens` excludes bos and ends with eos when
/// `finished`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub logprob: f64,
    pub finished: bool,
}

impl Hypothesis {
    fn empty() -> Self {
        Hypothesis {
            tokens: Vec::new(),
            logprob: 0.0,
            finished: false,
        }
    }

    fn extend(&self, token: usize, logp: f64) -> Self {
        let mut tokens = self.tokens.clone();
        tokens.push(token);
        Hypothesis {
            tokens,
            logprob: self.logprob + logp,
            finished: token == EOS,
        }
    }

    /// Tokens with the trailing eos removed.
    pub fn content(&self) -> &[usize] {
        match self.tokens.split_last() {
            Some((&EOS, rest)) => rest,
            _ => &self.tokens,
        }
    }

    fn score(&self, length_penalty: f64) -> f64 {
        if length_penalty == 0.0 || self.tokens.is_empty() {
            self.logprob
        } else {
            self.logprob / (self.tokens.len() as f64).powf(length_penalty)
        }
    }
}

/// Log-probabilities of the next token given the tokens emitted so far.
/// Entries of `-inf` are impossible continuations.
pub trait StepScorer {
    fn vocab_size(&self) -> usize;
    fn log_probs(&mut self, emitted: &[usize]) -> Result<Vec<f64>>;
}

/// Adapts a closure into a [`StepScorer`].
pub struct FnScorer<F> {
    vocab_size: usize,
    f: F,
}

impl<F: FnMut(&[usize]) -> Result<Vec<f64>>> FnScorer<F> {
    pub fn new(vocab_size: usize, f: F) -> Self {
        FnScorer { vocab_size, f }
    }
}

impl<F: FnMut(&[usize]) -> Result<Vec<f64>>> StepScorer for FnScorer<F> {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn log_probs(&mut self, emitted: &[usize]) -> Result<Vec<f64>> {
        (self.f)(emitted)
    }
}

fn checked_log_probs<S: StepScorer + ?Sized>(scorer: &mut S, emitted: &[usize]) -> Result<Vec<f64>> {
    let lp = scorer.log_probs(emitted)?;
    if lp.len() != scorer.vocab_size() {
        return Err(Error::Dimension(format!(
            "scorer returned {} log-probs for a vocabulary of {}",
            lp.len(),
            scorer.vocab_size()
        )));
    }
    if lp.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::Contract("no token has positive probability".into()));
    }
    Ok(lp)
}

/// Argmax decoding (ties to the lower id) until eos or `max_len` tokens.
pub fn greedy<S: StepScorer + ?Sized>(scorer: &mut S, max_len: usize) -> Result<Hypothesis> {
    let mut hyp = Hypothesis::empty();
    while !hyp.finished && hyp.tokens.len() < max_len {
        let lp = checked_log_probs(scorer, &hyp.tokens)?;
        let t = sampling::argmax(&lp);
        hyp = hyp.extend(t, lp[t]);
    }
    Ok(hyp)
}

/// Beam search with `beam_size` slots shared by live and finished
/// hypotheses. Candidates are ranked by score with ties resolved in favour
/// of the earlier beam and then the lower token id. Returns the best
/// finished hypothesis, or the best live one if none finished by `max_len`.
pub fn beam_search<S: StepScorer + ?Sized>(
    scorer: &mut S,
    beam_size: usize,
    max_len: usize,
    length_penalty: f64,
) -> Result<Hypothesis> {
    if beam_size == 0 {
        return Err(Error::Config("beam_size must be at least 1".into()));
    }
    let mut alive = vec![Hypothesis::empty()];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        let mut candidates = Vec::new();
        for hyp in &alive {
            let lp = checked_log_probs(scorer, &hyp.tokens)?;
            let mut order: Vec<usize> = (0..lp.len()).filter(|&t| lp[t] > f64::NEG_INFINITY).collect();
            order.sort_by(|&a, &b| lp[b].total_cmp(&lp[a]).then(a.cmp(&b)));
            order.truncate(beam_size);
            candidates.extend(order.into_iter().map(|t| hyp.extend(t, lp[t])));
        }
        candidates.sort_by(|a, b| b.score(length_penalty).total_cmp(&a.score(length_penalty)));
        candidates.truncate(beam_size);
        alive.clear();
        for c in candidates {
            if c.finished {
                finished.push(c);
            } else {
                alive.push(c);
            }
        }
        if alive.is_empty() {
            break;
        }
        if length_penalty == 0.0 {
            // Log-probabilities only decrease, so no live beam can overtake.
            let best_done = finished.iter().map(|h| h.logprob).fold(f64::NEG_INFINITY, f64::max);
            let best_alive = alive.iter().map(|h| h.logprob).fold(f64::NEG_INFINITY, f64::max);
            if best_done >= best_alive {
                break;
            }
        }
    }
    let pool = if finished.is_empty() { alive } else { finished };
    best(pool, length_penalty)
}

fn best(pool: Vec<Hypothesis>, length_penalty: f64) -> Result<Hypothesis> {
    let mut best: Option<Hypothesis> = None;
    for h in pool {
        if best.as_ref().is_none_or(|b| h.score(length_penalty) > b.score(length_penalty)) {
            best = Some(h);
        }
    }
    best.ok_or_else(|| Error::Contract("beam search produced no hypothesis".into()))
}

/// Ancestral sampling: at each step `truncate` maps the next-token
/// distribution to the one actually sampled from, and the hypothesis
/// accumulates log-probabilities under that distribution.
pub fn sample_sequence<S, T, R>(scorer: &mut S, truncate: T, rng: &mut R, max_len: usize) -> Result<Hypothesis>
where
    S: StepScorer + ?Sized,
    T: Fn(&[f64]) -> Vec<f64>,
    R: Rng + ?Sized,
{
    let mut hyp = Hypothesis::empty();
    while !hyp.finished && hyp.tokens.len() < max_len {
        let lp = checked_log_probs(scorer, &hyp.tokens)?;
        let probs: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        let dist = truncate(&probs);
        let total: f64 = dist.iter().sum();
        let t = sampling::draw(&dist, rng);
        hyp = hyp.extend(t, (dist[t] / total).ln());
    }
    Ok(hyp)
}
