//! Strategy dispatch over a trained model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Combine, DecodeConfig, MaskMode, Strategy};
use super::focus_vocab::{self, AllowedVocab};
use super::sampling;
use super::search::{self, Hypothesis, StepScorer};
use crate::data::vocab::BOS;
use crate::error::{Error, Result};
use crate::fame::{self, FrequentSet, TopicDistribution};
use crate::numerics::Tensor;
use crate::transformer::{self, EncoderState, HeadSelection, ModelParams};

/// Next-token scorer of an encoded document: output logits plus the focus
/// bias of `topic` (if any), restricted to `allowed`.
pub struct ModelScorer<'a> {
    params: &'a ModelParams,
    enc: &'a EncoderState,
    topic: Option<&'a TopicDistribution>,
    allowed: AllowedVocab,
    mask_mode: MaskMode,
}

impl<'a> ModelScorer<'a> {
    pub fn new(
        params: &'a ModelParams,
        enc: &'a EncoderState,
        topic: Option<&'a TopicDistribution>,
        allowed: Option<AllowedVocab>,
        mask_mode: MaskMode,
    ) -> Self {
        let v = params.config.vocab_size;
        ModelScorer {
            params,
            enc,
            topic,
            allowed: allowed.unwrap_or_else(|| AllowedVocab::full(v)),
            mask_mode,
        }
    }

    /// Next-token distribution (not log) after `emitted`.
    pub fn distribution(&self, emitted: &[usize]) -> Result<Tensor> {
        let mut prefix = Vec::with_capacity(emitted.len() + 1);
        prefix.push(BOS);
        prefix.extend_from_slice(emitted);
        let state = transformer::decode_step(self.params, self.enc, &prefix)?;
        let logits = transformer::output_logits(self.params, &state.y)?;
        let bias = match self.topic {
            Some(topic) => {
                let attn = select_heads(&state.attention, self.params.config.focus_heads)?;
                fame::focus_bias(&attn, &topic.per_token)?
            }
            None => Tensor::zeros(&[logits.numel()]),
        };
        focus_vocab::masked_distribution(&logits, &bias, &self.allowed, self.mask_mode)
    }
}

impl StepScorer for ModelScorer<'_> {
    fn vocab_size(&self) -> usize {
        self.params.config.vocab_size
    }

    fn log_probs(&mut self, emitted: &[usize]) -> Result<Vec<f64>> {
        Ok(self.distribution(emitted)?.values().iter().map(|p| p.ln()).collect())
    }
}

/// The attention row used for the focus bias, from `[heads×n]`.
pub fn select_heads(attention: &Tensor, heads: HeadSelection) -> Result<Tensor> {
    let (num_heads, n) = attention.rows_cols();
    match heads {
        HeadSelection::Single(i) if i < num_heads => Tensor::vector(attention.row(i).to_vec()),
        HeadSelection::Single(i) => Err(Error::Config(format!("focus head {i} of {num_heads}"))),
        HeadSelection::Mean => {
            let mut row = vec![0.0; n];
            for h in 0..num_heads {
                row.iter_mut().zip(attention.row(h)).for_each(|(r, a)| *r += a);
            }
            row.iter_mut().for_each(|r| *r /= num_heads as f64);
            Tensor::vector(row)
        }
    }
}

/// Everything a strategy may need about one input.
pub struct DecodeInput<'a> {
    pub doc: &'a [usize],
    /// Reference summary, required only for `oracle_focus`.
    pub reference: Option<&'a [usize]>,
}

/// Decodes one document; returns one hypothesis for the deterministic
/// strategies and `num_samples` for the sampling ones (sample `i` uses
/// seed `cfg.seed + i`).
pub fn decode(
    params: &ModelParams,
    frequent: &FrequentSet,
    input: &DecodeInput<'_>,
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>> {
    cfg.validate()?;
    let v = params.config.vocab_size;
    if frequent.vocab_size() != v {
        return Err(Error::Config(format!(
            "frequent set is over {} tokens, model vocabulary has {v}",
            frequent.vocab_size()
        )));
    }
    let max_len = cfg.max_len.min(params.config.max_output_len);
    let enc = transformer::encode(params, input.doc)?;
    let topic = fame::topic_distribution(params, &enc)?;
    let bias = cfg.focus_bias.then_some(&topic);
    let focus_k = cfg.focus_k.min(v);
    let seeds = (0..cfg.num_samples as u64).map(|i| cfg.seed.wrapping_add(i));
    let scorer = |allowed: Option<AllowedVocab>| ModelScorer::new(params, &enc, bias, allowed, cfg.mask_mode);

    if let Some(combine) = cfg.combine {
        if !matches!(cfg.strategy, Strategy::Focus | Strategy::TopK | Strategy::Nucleus) {
            return Err(Error::Config(format!(
                "combine {} requires strategy focus, topk or nucleus",
                combine.name()
            )));
        }
        return seeds
            .map(|seed| {
                let allowed = focus_vocab::sample_focus_vocab(&topic.logits, focus_k, frequent, seed)?;
                sample_one(&mut scorer(Some(allowed)), combine_sampler(combine), cfg, seed, max_len)
            })
            .collect();
    }

    match cfg.strategy {
        Strategy::Greedy => Ok(vec![search::greedy(&mut scorer(None), max_len)?]),
        Strategy::Beam => Ok(vec![beam(&mut scorer(None), cfg, max_len)?]),
        Strategy::TopK | Strategy::Nucleus => seeds
            .map(|seed| sample_one(&mut scorer(None), cfg.strategy, cfg, seed, max_len))
            .collect(),
        Strategy::Focus => seeds
            .map(|seed| {
                let allowed = focus_vocab::sample_focus_vocab(&topic.logits, focus_k, frequent, seed)?;
                beam(&mut scorer(Some(allowed)), cfg, max_len)
            })
            .collect(),
        Strategy::FocusControlled => {
            let allowed = focus_vocab::topk_focus_vocab(&topic.logits, focus_k, frequent)?;
            Ok(vec![beam(&mut scorer(Some(allowed)), cfg, max_len)?])
        }
        Strategy::OracleFocus => {
            let reference = input
                .reference
                .ok_or_else(|| Error::Input("oracle_focus needs the reference summary".into()))?;
            let oracle = fame::oracle_topic(reference, v, &enc.token_mask)?;
            let mut types = reference.to_vec();
            types.sort_unstable();
            types.dedup();
            let allowed = focus_vocab::oracle_vocab(&oracle.logits, types.len(), frequent)?;
            let bias = cfg.focus_bias.then_some(&oracle);
            let mut s = ModelScorer::new(params, &enc, bias, Some(allowed), cfg.mask_mode);
            Ok(vec![beam(&mut s, cfg, max_len)?])
        }
    }
}

fn beam(scorer: &mut ModelScorer<'_>, cfg: &DecodeConfig, max_len: usize) -> Result<Hypothesis> {
    search::beam_search(scorer, cfg.beam_size, max_len, cfg.length_penalty)
}

fn combine_sampler(combine: Combine) -> Strategy {
    match combine {
        Combine::FocusTopK => Strategy::TopK,
        Combine::FocusNucleus => Strategy::Nucleus,
    }
}

fn sample_one(
    scorer: &mut ModelScorer<'_>,
    sampler: Strategy,
    cfg: &DecodeConfig,
    seed: u64,
    max_len: usize,
) -> Result<Hypothesis> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match sampler {
        Strategy::TopK => {
            let k = cfg.sample_k;
            search::sample_sequence(scorer, |p: &[f64]| sampling::truncate_top_k(p, k), &mut rng, max_len)
        }
        Strategy::Nucleus => {
            let p = cfg.nucleus_p;
            search::sample_sequence(scorer, |d: &[f64]| sampling::truncate_nucleus(d, p), &mut rng, max_len)
        }
        other => Err(Error::Config(format!("{} is not a sampler", other.name()))),
    }
}
