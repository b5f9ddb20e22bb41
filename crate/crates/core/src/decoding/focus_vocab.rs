//! Allowed-vocabulary masks for focus sampling and controlled generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::MaskMode;
use crate::data::vocab::EOS;
use crate::error::{Error, Result};
use crate::fame::FrequentSet;
use crate::numerics::{kernels, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Full,
    SampledVk,
    TopkVk,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllowedVocab {
    pub mask: Vec<bool>,
    pub provenance: Provenance,
}

impl AllowedVocab {
    pub fn full(vocab_size: usize) -> Self {
        AllowedVocab {
            mask: vec![true; vocab_size],
            provenance: Provenance::Full,
        }
    }

    /// `chosen ∪ F ∪ {eos}`.
    fn with_frequent(vocab_size: usize, chosen: &[usize], frequent: &FrequentSet, provenance: Provenance) -> Self {
        let mut mask = vec![false; vocab_size];
        for &i in chosen.iter().chain(frequent.ids()) {
            mask[i] = true;
        }
        mask[EOS] = true;
        AllowedVocab { mask, provenance }
    }

    pub fn allows(&self, id: usize) -> bool {
        self.mask.get(id).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

fn check_k(k: usize, vocab_size: usize) -> Result<()> {
    if k == 0 || k > vocab_size {
        return Err(Error::Config(format!("focus k {k} outside 1..={vocab_size}")));
    }
    Ok(())
}

/// Draws `k` distinct tokens from `softmax(t_X)` without replacement
/// (Gumbel-top-k) and adds the frequent set and eos.
pub fn sample_focus_vocab(topic_logits: &Tensor, k: usize, frequent: &FrequentSet, seed: u64) -> Result<AllowedVocab> {
    sample_focus_vocab_with(topic_logits, k, frequent, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_focus_vocab_with<R: Rng + ?Sized>(
    topic_logits: &Tensor,
    k: usize,
    frequent: &FrequentSet,
    rng: &mut R,
) -> Result<AllowedVocab> {
    let logits = topic_logits.values();
    check_k(k, logits.len())?;
    let keys: Vec<f64> = logits
        .iter()
        .map(|&l| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            l - (-u.ln()).ln()
        })
        .collect();
    let chosen = top_indices(&keys, k);
    Ok(AllowedVocab::with_frequent(logits.len(), &chosen, frequent, Provenance::SampledVk))
}

/// The `k` largest logits of `t_X` (ties to the lower id) plus the frequent
/// set and eos.
pub fn topk_focus_vocab(topic_logits: &Tensor, k: usize, frequent: &FrequentSet) -> Result<AllowedVocab> {
    let logits = topic_logits.values();
    check_k(k, logits.len())?;
    let chosen = top_indices(logits, k);
    Ok(AllowedVocab::with_frequent(logits.len(), &chosen, frequent, Provenance::TopkVk))
}

/// Like [`topk_focus_vocab`] but tagged as derived from an oracle topic.
pub fn oracle_vocab(topic_logits: &Tensor, k: usize, frequent: &FrequentSet) -> Result<AllowedVocab> {
    let mut v = topk_focus_vocab(topic_logits, k, frequent)?;
    v.provenance = Provenance::Oracle;
    Ok(v)
}

fn top_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Focused distribution restricted to the allowed vocabulary.
pub fn masked_distribution(logits: &Tensor, bias: &Tensor, allowed: &AllowedVocab, mode: MaskMode) -> Result<Tensor> {
    let n = logits.numel();
    if bias.numel() != n || allowed.mask.len() != n {
        return Err(Error::Dimension("masked_distribution operand lengths differ".into()));
    }
    if !allowed.mask.iter().any(|&b| b) {
        return Err(Error::Contract("allowed vocabulary is empty".into()));
    }
    let mut row: Vec<f64> = logits.values().iter().zip(bias.values()).map(|(a, b)| a + b).collect();
    match mode {
        MaskMode::Renormalize => kernels::softmax_row(&mut row, Some(&allowed.mask)),
        MaskMode::Literal => {
            kernels::softmax_row(&mut row, None);
            row.iter_mut()
                .zip(&allowed.mask)
                .filter(|(_, &ok)| !ok)
                .for_each(|(v, _)| *v = 0.0);
        }
    }
    Tensor::vector(row)
}
