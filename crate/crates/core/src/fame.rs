//! Focus attention: source-conditioned vocabulary distributions, the focus
//! bias they induce on the output logits, and the topic loss that
//! supervises them.
//!
//! For encoder states `X = x_1..x_n` the token-level vocabulary
//! distribution is `t_{x_i} = gelu(x_i W1) W2 Eᵀ` (one logit per vocabulary
//! item, `E` the shared embedding). Their mean over non-pad positions is the
//! topic distribution `t_X`. At each decoding step the final-layer
//! cross-attention `a_t` mixes the rows into a bias `f_t = Σ a_{t,i} t_{x_i}`
//! that is added to the output logits before the softmax.

use crate::data::vocab::{EOS, RESERVED};
use crate::error::{Error, Result};
use crate::numerics::{kernels, Tape, Tensor, Var};
use crate::transformer::{
    bind, source_mask, teacher_forcing, Dropout, EncoderState, Graph, ModelConfig, ModelParams,
    Weights,
};

/// Default weight of the likelihood term in the combined loss.
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Number of sorted logits spanned by the peakiness slope.
pub const PEAKINESS_WINDOW: usize = 100;

/// The two dense layers of the focus projection: `W1[h×h']`, `W2[h'×h]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FocusLayer<T = Tensor> {
    pub w1: T,
    pub w2: T,
}

/// Per-token and pooled vocabulary logits for one source sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct TopicDistribution {
    /// `t_X`, `[|V|]`.
    pub logits: Tensor,
    /// `t_{x_i}` rows, `[n×|V|]`.
    pub per_token: Tensor,
    pub token_mask: Vec<bool>,
}

/// The `|F|` most frequent non-reserved training tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequentSet {
    members: Vec<bool>,
    ids: Vec<usize>,
}

impl FrequentSet {
    /// Picks the `size` highest-frequency non-reserved ids; ties go to the
    /// lower id.
    pub fn from_frequencies(freqs: &[u64], size: usize) -> Result<Self> {
        let mut order: Vec<usize> = (RESERVED..freqs.len()).collect();
        if order.len() < size {
            return Err(Error::Input(format!(
                "only {} non-reserved tokens for a frequent set of {size}",
                order.len()
            )));
        }
        order.sort_by(|&a, &b| freqs[b].cmp(&freqs[a]).then(a.cmp(&b)));
        order.truncate(size);
        Ok(Self::from_ids(freqs.len(), order))
    }

    pub fn from_ids(vocab_size: usize, ids: impl IntoIterator<Item = usize>) -> Self {
        let mut members = vec![false; vocab_size];
        for id in ids {
            members[id] = true;
        }
        let ids = (0..vocab_size).filter(|&i| members[i]).collect();
        FrequentSet { members, ids }
    }

    pub fn empty(vocab_size: usize) -> Self {
        Self::from_ids(vocab_size, [])
    }

    pub fn contains(&self, id: usize) -> bool {
        self.members.get(id).copied().unwrap_or(false)
    }

    /// Member ids in increasing order.
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.members.len()
    }
}

/// Indicator over the vocabulary of the content token types of a reference:
/// every type occurring in it, minus the frequent set and reserved tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopicTarget {
    pub membership: Vec<bool>,
}

impl TopicTarget {
    pub fn new(reference: &[usize], vocab_size: usize, frequent: &FrequentSet) -> Result<Self> {
        let mut membership = vec![false; vocab_size];
        for &t in reference {
            if t >= vocab_size {
                return Err(Error::Input(format!("token id {t} out of range")));
            }
            if t >= RESERVED && !frequent.contains(t) {
                membership[t] = true;
            }
        }
        Ok(TopicTarget { membership })
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.membership.len()).filter(|&i| self.membership[i])
    }
}

/// `gelu(x_i W1) W2 Eᵀ` for a single encoder vector.
pub fn token_vocab_distribution(focus: &FocusLayer, embedding: &Tensor, x_i: &Tensor) -> Result<Tensor> {
    let (v, h) = embedding.rows_cols();
    let (h1, f) = focus.w1.rows_cols();
    if x_i.numel() != h || h1 != h || focus.w2.shape() != [f, h] {
        return Err(Error::Dimension(format!(
            "token_vocab_distribution: x {:?}, W1 {:?}, W2 {:?}, E {:?}",
            x_i.shape(),
            focus.w1.shape(),
            focus.w2.shape(),
            embedding.shape()
        )));
    }
    let inner: Vec<f64> = kernels::matmul(x_i.values(), focus.w1.values(), 1, h, f)
        .into_iter()
        .map(kernels::gelu)
        .collect();
    let back = kernels::matmul(&inner, focus.w2.values(), 1, f, h);
    Tensor::vector(kernels::matmul_bt(&back, embedding.values(), 1, h, v))
}

/// Mean of the rows of `per_token` at non-pad positions.
pub fn source_vocab_distribution(per_token: &Tensor, token_mask: &[bool]) -> Result<Tensor> {
    let (n, v) = per_token.rows_cols();
    if token_mask.len() != n {
        return Err(Error::Dimension(format!("{} mask flags for {n} rows", token_mask.len())));
    }
    let count = token_mask.iter().filter(|&&b| b).count();
    if count == 0 {
        return Err(Error::Input("topic distribution of an all-pad source".into()));
    }
    let mut out = vec![0.0; v];
    for i in (0..n).filter(|&i| token_mask[i]) {
        out.iter_mut().zip(per_token.row(i)).for_each(|(o, x)| *o += x);
    }
    out.iter_mut().for_each(|o| *o /= count as f64);
    Tensor::vector(out)
}

/// Attention-weighted sum of token-level distributions.
pub fn focus_bias(attention: &Tensor, per_token: &Tensor) -> Result<Tensor> {
    let (n, v) = per_token.rows_cols();
    if attention.numel() != n {
        return Err(Error::Dimension(format!(
            "attention over {} positions, {n} token rows",
            attention.numel()
        )));
    }
    let total: f64 = attention.values().iter().sum();
    if (total - 1.0).abs() > 1e-6 || attention.values().iter().any(|&a| a < 0.0) {
        return Err(Error::Contract(format!("attention is not a distribution (sums to {total})")));
    }
    Tensor::vector(kernels::matmul(attention.values(), per_token.values(), 1, n, v))
}

/// `softmax(logits + f_t)`.
pub fn focused_distribution(logits: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if logits.numel() != bias.numel() {
        return Err(Error::Dimension("logits and focus bias differ in length".into()));
    }
    let mut row: Vec<f64> = logits.values().iter().zip(bias.values()).map(|(a, b)| a + b).collect();
    kernels::softmax_row(&mut row, None);
    Tensor::vector(row)
}

/// Mean over the vocabulary of the binary cross-entropy between
/// `sigmoid(t_X)` and the topic target, computed from logits.
pub fn topic_loss(topic_logits: &Tensor, target: &TopicTarget) -> Result<f64> {
    if topic_logits.numel() != target.membership.len() {
        return Err(Error::Dimension("topic logits and target differ in length".into()));
    }
    let total: f64 = (topic_logits.values().iter().zip(&target.membership))
        .map(|(&x, &y)| if y { -kernels::log_sigmoid(x) } else { -kernels::log_sigmoid(-x) })
        .sum();
    Ok(total / topic_logits.numel() as f64)
}

/// `λ·mle + (1−λ)·topic`.
pub fn combined_loss(mle: f64, topic: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(lambda * mle + (1.0 - lambda) * topic)
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Config(format!("lambda {lambda} outside [0, 1]")))
    }
}

/// Slope of the line from the largest to the `w`-th largest logit,
/// `w = min(100, |V|)`.
pub fn peakiness(topic_logits: &Tensor) -> Result<f64> {
    let mut sorted = topic_logits.values().to_vec();
    if sorted.len() < 2 {
        return Err(Error::Input("peakiness needs at least 2 logits".into()));
    }
    sorted.sort_by(|a, b| b.total_cmp(a));
    let w = PEAKINESS_WINDOW.min(sorted.len());
    Ok((sorted[0] - sorted[w - 1]) / (w - 1) as f64)
}

/// Records `gelu(X W1) W2 Eᵀ` for all source positions, `[n×|V|]`.
pub fn token_vocab_on(tape: &mut Tape, focus: &FocusLayer<Var>, embedding: Var, x: Var) -> Result<Var> {
    let inner = tape.matmul(x, focus.w1)?;
    let inner = tape.gelu(inner);
    let back = tape.matmul(inner, focus.w2)?;
    let et = tape.transpose(embedding)?;
    tape.matmul(back, et)
}

/// Topic distribution of an encoded source.
pub fn topic_distribution(params: &ModelParams, enc: &EncoderState) -> Result<TopicDistribution> {
    let mut tape = Tape::new();
    let focus = FocusLayer {
        w1: tape.leaf(params.weights.focus.w1.clone()),
        w2: tape.leaf(params.weights.focus.w2.clone()),
    };
    let e = tape.leaf(params.weights.embedding.clone());
    let x = tape.leaf(enc.x.clone());
    let per_token = token_vocab_on(&mut tape, &focus, e, x)?;
    let per_token = tape.value(per_token).clone();
    let logits = source_vocab_distribution(&per_token, &enc.token_mask)?;
    Ok(TopicDistribution {
        logits,
        per_token,
        token_mask: enc.token_mask.clone(),
    })
}

/// Loss terms of one training example, recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct ExampleLosses {
    pub mle: Var,
    pub topic: Var,
    pub combined: Var,
}

/// Focused output logits `[m×|V|]` for teacher-forced decoder `inputs`,
/// together with the pooled topic logits `[|V|]`.
#[derive(Clone, Copy, Debug)]
pub struct FocusedForward {
    pub logits: Var,
    pub topic_logits: Var,
}

pub fn focused_forward(
    tape: &mut Tape,
    config: &ModelConfig,
    w: &Weights<Var>,
    doc: &[usize],
    inputs: &[usize],
    dropout: Option<&mut Dropout>,
) -> Result<FocusedForward> {
    let mask = source_mask(config, doc)?;
    let mut g = Graph::new(tape, config, w);
    g.dropout = dropout;
    let x = g.encode(doc, &mask)?;
    let out = g.decode(x, &mask, inputs)?;
    let attn = g.focus_attention(&out.head_attention)?;
    let logits = g.output_logits(out.hidden)?;

    let per_token = token_vocab_on(tape, &w.focus, w.embedding, x)?;
    let topic_logits = tape.masked_mean_rows(per_token, &mask)?;
    let bias = tape.matmul(attn, per_token)?;
    let logits = tape.add(logits, bias)?;
    Ok(FocusedForward { logits, topic_logits })
}

/// Records the focused-distribution likelihood, the topic loss and their
/// λ-weighted combination for one (document, reference) pair.
#[allow(clippy::too_many_arguments)]
pub fn example_losses(
    tape: &mut Tape,
    config: &ModelConfig,
    w: &Weights<Var>,
    doc: &[usize],
    reference: &[usize],
    target: &TopicTarget,
    lambda: f64,
    dropout: Option<&mut Dropout>,
) -> Result<ExampleLosses> {
    check_lambda(lambda)?;
    let (inputs, targets) = teacher_forcing(config, reference)?;
    let fwd = focused_forward(tape, config, w, doc, &inputs, dropout)?;
    let topic = tape.bce_with_logits(fwd.topic_logits, &target.membership)?;
    let logp = tape.log_softmax(fwd.logits)?;
    let mle = tape.nll(logp, &targets)?;

    let a = tape.scale(mle, lambda);
    let b = tape.scale(topic, 1.0 - lambda);
    let combined = tape.add(a, b)?;
    Ok(ExampleLosses { mle, topic, combined })
}

/// Evaluates the three losses of one example without keeping the tape.
pub fn evaluate_losses(
    params: &ModelParams,
    doc: &[usize],
    reference: &[usize],
    frequent: &FrequentSet,
    lambda: f64,
) -> Result<(f64, f64, f64)> {
    let target = TopicTarget::new(reference, params.config.vocab_size, frequent)?;
    let mut tape = Tape::new();
    let w = bind(&mut tape, &params.weights);
    let l = example_losses(&mut tape, &params.config, &w, doc, reference, &target, lambda, None)?;
    Ok((
        tape.scalar_value(l.mle),
        tape.scalar_value(l.topic),
        tape.scalar_value(l.combined),
    ))
}

/// Logit magnitude of the oracle topic distribution.
pub const ORACLE_MAGNITUDE: f64 = 20.0;

/// Topic target and t_X replacement built from a reference summary: `+M` on
/// every token type of the reference (eos and frequent tokens included),
/// `−M` elsewhere. Every per-token row equals the pooled vector, so the
/// focus bias is that vector under any attention.
pub fn oracle_topic(reference: &[usize], vocab_size: usize, token_mask: &[bool]) -> Result<TopicDistribution> {
    if reference.is_empty() {
        return Err(Error::Input("oracle topic of an empty reference".into()));
    }
    let mut logits = vec![-ORACLE_MAGNITUDE; vocab_size];
    for &t in reference {
        if t >= vocab_size {
            return Err(Error::Input(format!("token id {t} out of range")));
        }
        logits[t] = ORACLE_MAGNITUDE;
    }
    let n = token_mask.len().max(1);
    let per_token = Tensor::matrix(n, vocab_size, logits.repeat(n))?;
    let token_mask = if token_mask.is_empty() { vec![true] } else { token_mask.to_vec() };
    Ok(TopicDistribution {
        logits: Tensor::vector(logits)?,
        per_token,
        token_mask,
    })
}

/// Reference token types (eos excluded), for oracle support checks.
pub fn reference_types(reference: &[usize]) -> Vec<usize> {
    let mut types: Vec<usize> = reference.iter().copied().filter(|&t| t != EOS).collect();
    types.sort_unstable();
    types.dedup();
    types
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::vector(v.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn token_vocab_examples() {
        let id = FocusLayer {
            w1: Tensor::identity(2),
            w2: Tensor::identity(2),
        };
        let out = token_vocab_distribution(&id, &Tensor::identity(2), &t(&[1.0, -1.0])).unwrap();
        assert!(close(out.values()[0], 0.841345, 1e-5));
        assert!(close(out.values()[1], -0.158655, 1e-5));

        let zero = FocusLayer {
            w1: Tensor::zeros(&[2, 3]),
            w2: Tensor::full(&[3, 2], 0.4),
        };
        let e = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let out = token_vocab_distribution(&zero, &e, &t(&[0.3, 0.7])).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));

        let layer = FocusLayer {
            w1: Tensor::full(&[2, 3], 0.3),
            w2: Tensor::full(&[3, 2], -0.2),
        };
        let base = token_vocab_distribution(&layer, &e, &t(&[0.3, 0.7])).unwrap();
        let scaled = token_vocab_distribution(&layer, &e.scaled(2.5), &t(&[0.3, 0.7])).unwrap();
        assert!(base.scaled(2.5).max_abs_diff(&scaled) < 1e-12);
    }

    #[test]
    fn source_vocab_examples() {
        let single = Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(source_vocab_distribution(&single, &[true]).unwrap().values(), single.values());
        let rows = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(source_vocab_distribution(&rows, &[true, true]).unwrap().values(), &[0.5, 0.5]);
        assert_eq!(source_vocab_distribution(&rows, &[false, true]).unwrap().values(), &[0.0, 1.0]);
        assert!(matches!(source_vocab_distribution(&rows, &[false, false]), Err(Error::Input(_))));
    }

    #[test]
    fn focus_bias_examples() {
        let rows = Tensor::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(focus_bias(&t(&[0.25, 0.75]), &rows).unwrap().values(), &[0.25, 0.75, 0.0]);
        assert_eq!(focus_bias(&t(&[0.0, 1.0]), &rows).unwrap().values(), rows.row(1));
        assert!(matches!(focus_bias(&t(&[0.5, 0.6]), &rows), Err(Error::Contract(_))));
    }

    #[test]
    fn focused_distribution_examples() {
        let p = focused_distribution(&t(&[0.0; 3]), &t(&[3f64.ln(), 0.0, 0.0])).unwrap();
        for (a, b) in p.values().iter().zip([0.6, 0.2, 0.2]) {
            assert!(close(*a, b, 1e-15));
        }
        let logits = t(&[0.2, -1.0, 0.7]);
        let bias = t(&[0.5, 0.1, -0.3]);
        let shifted = bias.map(|v| v + 4.0);
        let a = focused_distribution(&logits, &bias).unwrap();
        let b = focused_distribution(&logits, &shifted).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn topic_loss_examples() {
        let f = FrequentSet::empty(3);
        let target = TopicTarget::new(&[0], 3, &f).unwrap();
        // id 0 is reserved, so build the membership directly for the hand case.
        assert!(target.membership.iter().all(|&b| !b));
        let target = TopicTarget {
            membership: vec![true, false, false],
        };
        assert!(close(topic_loss(&t(&[1.0, 0.0, -1.0]), &target).unwrap(), 0.439895, 1e-5));
        assert!(close(topic_loss(&t(&[0.0; 3]), &target).unwrap(), 2f64.ln(), 1e-15));
        let target4 = TopicTarget {
            membership: vec![true, false, false, false],
        };
        assert!(topic_loss(&t(&[40.0, -40.0, -40.0, -40.0]), &target4).unwrap() < 1e-9);
    }

    #[test]
    fn combined_loss_examples() {
        assert_eq!(combined_loss(2.0, 1.0, 0.5).unwrap(), 1.5);
        assert_eq!(combined_loss(2.0, 1.0, 1.0).unwrap(), 2.0);
        assert_eq!(combined_loss(2.0, 1.0, 0.0).unwrap(), 1.0);
        assert!(matches!(combined_loss(2.0, 1.0, 1.5), Err(Error::Config(_))));
    }

    #[test]
    fn peakiness_examples() {
        assert_eq!(peakiness(&t(&[3.0; 10])).unwrap(), 0.0);
        let linear: Vec<f64> = (1..=150).map(|i| -0.01 * i as f64).collect();
        assert!(close(peakiness(&t(&linear)).unwrap(), 0.01, 1e-12));
        assert!(peakiness(&t(&[1.0])).is_err());
    }

    #[test]
    fn frequent_set_ties_prefer_lower_id() {
        let freqs = [0, 0, 0, 0, 5, 9, 9, 1];
        let f = FrequentSet::from_frequencies(&freqs, 2).unwrap();
        assert_eq!(f.ids(), &[5, 6]);
        let f = FrequentSet::from_frequencies(&freqs, 3).unwrap();
        assert_eq!(f.ids(), &[4, 5, 6]);
    }

    #[test]
    fn topic_target_excludes_frequent_and_reserved() {
        let f = FrequentSet::from_ids(10, [4]);
        let target = TopicTarget::new(&[4, 5, 6, 5, EOS], 10, &f).unwrap();
        assert_eq!(target.members().collect::<Vec<_>>(), vec![5, 6]);
    }

    #[test]
    fn oracle_topic_is_two_level() {
        let o = oracle_topic(&[5, 6, EOS], 120, &[true, true]).unwrap();
        assert_eq!(o.logits.values()[5], ORACLE_MAGNITUDE);
        assert_eq!(o.logits.values()[7], -ORACLE_MAGNITUDE);
        let expected = 2.0 * ORACLE_MAGNITUDE / 99.0;
        assert!(close(peakiness(&o.logits).unwrap(), expected, 1e-12));
        assert_eq!(o.per_token.row(1), o.logits.values());
    }
}
