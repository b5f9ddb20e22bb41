//! Encoder-decoder forward pass.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{HeadSelection, ModelConfig};
use super::params::{Block, CrossBlock, ModelParams, Weights};
use crate::data::vocab::{BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::numerics::{kernels, Tape, Tensor, Var};

/// Contextual source vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderState {
    /// `[n×h]`.
    pub x: Tensor,
    /// `true` at non-pad positions.
    pub token_mask: Vec<bool>,
}

/// Decoder output for the next position.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderStepState {
    /// Final-layer representation `[h]`.
    pub y: Tensor,
    /// Final-layer cross-attention, one row per head: `[heads×n]`.
    pub attention: Tensor,
}

/// Inverted dropout on residual branches.
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn apply(&mut self, tape: &mut Tape, v: Var) -> Result<Var> {
        if self.rate <= 0.0 {
            return Ok(v);
        }
        let keep = 1.0 / (1.0 - self.rate);
        let n = tape.value(v).numel();
        let mask: Rc<[f64]> = (0..n)
            .map(|_| if self.rng.random::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        tape.mul_const(v, mask)
    }
}

/// Sinusoidal position encodings `[len×h]`.
pub fn positional_encoding(len: usize, hidden: usize) -> Tensor {
    let mut vals = Vec::with_capacity(len * hidden);
    for pos in 0..len {
        for j in 0..hidden {
            let pair = (j / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / hidden as f64);
            vals.push(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::matrix(len, hidden, vals).expect("positive shape")
}

/// Records every weight as a leaf on `tape`.
pub fn bind(tape: &mut Tape, weights: &Weights<Tensor>) -> Weights<Var> {
    weights.map(|_, t| tape.leaf(t.clone()))
}

/// Decoder outputs for a whole (teacher-forced) prefix.
pub struct DecoderOutput {
    /// `[m×h]` final-layer representations.
    pub hidden: Var,
    /// Final-layer cross-attention per head, each `[m×n]`.
    pub head_attention: Vec<Var>,
}

/// A forward pass under construction on a tape.
pub struct Graph<'a> {
    pub tape: &'a mut Tape,
    pub config: &'a ModelConfig,
    pub weights: &'a Weights<Var>,
    pub dropout: Option<&'a mut Dropout>,
}

impl<'a> Graph<'a> {
    pub fn new(tape: &'a mut Tape, config: &'a ModelConfig, weights: &'a Weights<Var>) -> Self {
        Graph {
            tape,
            config,
            weights,
            dropout: None,
        }
    }

    fn drop(&mut self, v: Var) -> Result<Var> {
        match self.dropout.as_deref_mut() {
            Some(d) => d.apply(self.tape, v),
            None => Ok(v),
        }
    }

    /// Token embeddings scaled by `sqrt(h)` plus position encodings.
    pub fn embed(&mut self, ids: &[usize]) -> Result<Var> {
        let h = self.config.hidden;
        let rows = self.tape.gather_rows(self.weights.embedding, ids)?;
        let scaled = self.tape.scale(rows, (h as f64).sqrt());
        let pe = self.tape.leaf(positional_encoding(ids.len(), h));
        self.tape.add(scaled, pe)
    }

    /// Multi-head attention of `query_in` over `kv_in`; returns the projected
    /// output and the per-head attention matrices.
    #[allow(clippy::too_many_arguments)]
    fn attention(
        &mut self,
        query_in: Var,
        kv_in: Var,
        wq: Var,
        wk: Var,
        wv: Var,
        wo: Var,
        mask: &[bool],
    ) -> Result<(Var, Vec<Var>)> {
        let heads = self.config.num_heads;
        let dh = self.config.head_dim();
        let q = self.tape.matmul(query_in, wq)?;
        let k = self.tape.matmul(kv_in, wk)?;
        let v = self.tape.matmul(kv_in, wv)?;
        let mut outputs = Vec::with_capacity(heads);
        let mut probs = Vec::with_capacity(heads);
        for head in 0..heads {
            let qh = self.tape.slice_cols(q, head * dh, dh)?;
            let kh = self.tape.slice_cols(k, head * dh, dh)?;
            let vh = self.tape.slice_cols(v, head * dh, dh)?;
            let kt = self.tape.transpose(kh)?;
            let scores = self.tape.matmul(qh, kt)?;
            let scores = self.tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let p = self.tape.softmax(scores, Some(mask))?;
            outputs.push(self.tape.matmul(p, vh)?);
            probs.push(p);
        }
        let joined = if heads == 1 {
            outputs[0]
        } else {
            self.tape.concat_cols(&outputs)?
        };
        Ok((self.tape.matmul(joined, wo)?, probs))
    }

    fn self_attention_sublayer(&mut self, x: Var, b: &Block<Var>, mask: &[bool]) -> Result<Var> {
        let normed = self.tape.layer_norm(x, b.attn_norm_gain, b.attn_norm_bias)?;
        let (out, _) = self.attention(normed, normed, b.wq, b.wk, b.wv, b.wo, mask)?;
        let out = self.drop(out)?;
        self.tape.add(x, out)
    }

    fn ffn_sublayer(&mut self, x: Var, b: &Block<Var>) -> Result<Var> {
        let normed = self.tape.layer_norm(x, b.ffn_norm_gain, b.ffn_norm_bias)?;
        let inner = self.tape.matmul(normed, b.ffn_in)?;
        let inner = self.tape.add_row(inner, b.ffn_in_bias)?;
        let inner = self.tape.gelu(inner);
        let out = self.tape.matmul(inner, b.ffn_out)?;
        let out = self.tape.add_row(out, b.ffn_out_bias)?;
        let out = self.drop(out)?;
        self.tape.add(x, out)
    }

    fn cross_sublayer(
        &mut self,
        y: Var,
        x: Var,
        c: &CrossBlock<Var>,
        mask: &[bool],
    ) -> Result<(Var, Vec<Var>)> {
        let normed = self.tape.layer_norm(y, c.norm_gain, c.norm_bias)?;
        let (out, probs) = self.attention(normed, x, c.wq, c.wk, c.wv, c.wo, mask)?;
        let out = self.drop(out)?;
        Ok((self.tape.add(y, out)?, probs))
    }

    /// Encodes `ids` (pad positions flagged false in `mask`) into `[n×h]`.
    pub fn encode(&mut self, ids: &[usize], mask: &[bool]) -> Result<Var> {
        let n = ids.len();
        let attn_mask: Vec<bool> = (0..n).flat_map(|_| mask.iter().copied()).collect();
        let mut x = self.embed(ids)?;
        x = self.drop(x)?;
        let weights = self.weights;
        for block in &weights.encoder {
            x = self.self_attention_sublayer(x, block, &attn_mask)?;
            x = self.ffn_sublayer(x, block)?;
        }
        self.tape
            .layer_norm(x, weights.encoder_norm_gain, weights.encoder_norm_bias)
    }

    pub fn decode(&mut self, x: Var, src_mask: &[bool], prefix: &[usize]) -> Result<DecoderOutput> {
        let emb = self.embed(prefix)?;
        self.decode_embedded(x, src_mask, emb)
    }

    /// Runs the decoder on already-embedded inputs `[m×h]`.
    pub fn decode_embedded(&mut self, x: Var, src_mask: &[bool], emb: Var) -> Result<DecoderOutput> {
        let m = self.tape.value(emb).rows_cols().0;
        let causal: Vec<bool> = (0..m).flat_map(|i| (0..m).map(move |j| j <= i)).collect();
        let cross_mask: Vec<bool> = (0..m).flat_map(|_| src_mask.iter().copied()).collect();
        let weights = self.weights;
        let mut y = self.drop(emb)?;
        let mut head_attention = Vec::new();
        for (i, cross) in weights.cross.iter().enumerate() {
            let block = weights.decoder_block(i);
            y = self.self_attention_sublayer(y, block, &causal)?;
            let (out, probs) = self.cross_sublayer(y, x, cross, &cross_mask)?;
            y = out;
            head_attention = probs;
            y = self.ffn_sublayer(y, block)?;
        }
        let hidden =
            self.tape
                .layer_norm(y, weights.decoder_norm_gain, weights.decoder_norm_bias)?;
        Ok(DecoderOutput {
            hidden,
            head_attention,
        })
    }

    /// The single attention distribution used for the focus bias, `[m×n]`.
    pub fn focus_attention(&mut self, heads: &[Var]) -> Result<Var> {
        match self.config.focus_heads {
            HeadSelection::Single(i) => Ok(heads[i]),
            HeadSelection::Mean => {
                let mut acc = heads[0];
                for &h in &heads[1..] {
                    acc = self.tape.add(acc, h)?;
                }
                Ok(self.tape.scale(acc, 1.0 / heads.len() as f64))
            }
        }
    }

    /// Output logits `Y·Eᵀ`, `[m×|V|]`.
    pub fn output_logits(&mut self, hidden: Var) -> Result<Var> {
        let et = self.tape.transpose(self.weights.embedding)?;
        self.tape.matmul(hidden, et)
    }
}

/// Validates a source sequence and returns its non-pad mask.
pub fn source_mask(config: &ModelConfig, tokens: &[usize]) -> Result<Vec<bool>> {
    if tokens.is_empty() {
        return Err(Error::Input("empty source sequence".into()));
    }
    if tokens.len() > config.max_input_len {
        return Err(Error::Input(format!(
            "source length {} exceeds max_input_len {}",
            tokens.len(),
            config.max_input_len
        )));
    }
    check_ids(config, tokens)?;
    let mask: Vec<bool> = tokens.iter().map(|&t| t != PAD).collect();
    if !mask.iter().any(|&b| b) {
        return Err(Error::Input("source sequence is all padding".into()));
    }
    Ok(mask)
}

fn check_ids(config: &ModelConfig, tokens: &[usize]) -> Result<()> {
    match tokens.iter().find(|&&t| t >= config.vocab_size) {
        Some(&t) => Err(Error::Input(format!(
            "token id {t} out of range for vocabulary of {}",
            config.vocab_size
        ))),
        None => Ok(()),
    }
}

/// Splits a reference into teacher-forcing decoder inputs and targets.
///
/// The reference is cut after its first eos; trailing padding is dropped.
pub fn teacher_forcing(config: &ModelConfig, reference: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    check_ids(config, reference)?;
    let end = match reference.iter().position(|&t| t == EOS) {
        Some(i) => i + 1,
        None => reference.iter().rposition(|&t| t != PAD).map_or(0, |i| i + 1),
    };
    let targets = reference[..end].to_vec();
    if targets.is_empty() {
        return Err(Error::Input("empty reference".into()));
    }
    if targets.len() > config.max_output_len {
        return Err(Error::Input(format!(
            "reference length {} exceeds max_output_len {}",
            targets.len(),
            config.max_output_len
        )));
    }
    let mut inputs = Vec::with_capacity(targets.len());
    inputs.push(BOS);
    inputs.extend_from_slice(&targets[..targets.len() - 1]);
    Ok((inputs, targets))
}

pub fn encode(params: &ModelParams, tokens: &[usize]) -> Result<EncoderState> {
    let mask = source_mask(&params.config, tokens)?;
    let mut tape = Tape::new();
    let w = bind(&mut tape, &params.weights);
    let x = Graph::new(&mut tape, &params.config, &w).encode(tokens, &mask)?;
    Ok(EncoderState {
        x: tape.value(x).clone(),
        token_mask: mask,
    })
}

/// Runs the decoder on `prefix` (starting with bos) and returns the state
/// for the position after its last token.
pub fn decode_step(params: &ModelParams, enc: &EncoderState, prefix: &[usize]) -> Result<DecoderStepState> {
    let cfg = &params.config;
    if prefix.is_empty() || prefix.len() > cfg.max_output_len {
        return Err(Error::Input(format!(
            "prefix length {} outside 1..={}",
            prefix.len(),
            cfg.max_output_len
        )));
    }
    check_ids(cfg, prefix)?;
    let mut tape = Tape::new();
    let w = bind(&mut tape, &params.weights);
    let x = tape.leaf(enc.x.clone());
    let out = Graph::new(&mut tape, cfg, &w).decode(x, &enc.token_mask, prefix)?;
    let last = prefix.len() - 1;
    let y = Tensor::vector(tape.value(out.hidden).row(last).to_vec())?;
    let n = enc.token_mask.len();
    let rows: Vec<f64> = (out.head_attention.iter())
        .flat_map(|&p| tape.value(p).row(last).to_vec())
        .collect();
    let attention = Tensor::matrix(out.head_attention.len(), n, rows)?;
    Ok(DecoderStepState { y, attention })
}

/// Pre-softmax output logits `E·y`.
pub fn output_logits(params: &ModelParams, y: &Tensor) -> Result<Tensor> {
    let e = &params.weights.embedding;
    let (v, h) = e.rows_cols();
    if y.numel() != h {
        return Err(Error::Dimension(format!(
            "output_logits: y has {} values, hidden is {h}",
            y.numel()
        )));
    }
    Tensor::vector(kernels::matmul_bt(y.values(), e.values(), 1, h, v))
}

/// Teacher-forced mean cross-entropy under the plain output distribution
/// `softmax(E·y)`, without focus bias.
pub fn mle_loss(params: &ModelParams, doc: &[usize], reference: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let w = bind(&mut tape, &params.weights);
    let loss = mle_loss_on(&mut tape, &params.config, &w, doc, reference)?;
    Ok(tape.scalar_value(loss))
}

pub fn mle_loss_on(
    tape: &mut Tape,
    config: &ModelConfig,
    w: &Weights<Var>,
    doc: &[usize],
    reference: &[usize],
) -> Result<Var> {
    let mask = source_mask(config, doc)?;
    let (inputs, targets) = teacher_forcing(config, reference)?;
    let mut g = Graph::new(tape, config, w);
    let x = g.encode(doc, &mask)?;
    let out = g.decode(x, &mask, &inputs)?;
    let logits = g.output_logits(out.hidden)?;
    let logp = tape.log_softmax(logits)?;
    tape.nll(logp, &targets)
}
