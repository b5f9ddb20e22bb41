//! Adam training of the combined loss with warmup / inverse-sqrt decay,
//! periodic checkpoints and best-checkpoint selection.

use std::io::Write;
use std::path::Path;

use crate::data::corpus::{make_batches, Example};
use crate::decoding::{self, DecodeConfig, DecodeInput, Strategy};
use crate::error::{Error, Result};
use crate::fame::{self, FrequentSet, TopicTarget, DEFAULT_LAMBDA};
use crate::kv;
use crate::metrics;
use crate::numerics::{grad_check_with, GradCheckOptions, GradCheckReport, Tape, Tensor, Var};
use crate::transformer::{bind, checkpoint, teacher_forcing, Dropout, ModelParams};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Name of the file in a run directory that holds the best checkpoint name.
pub const BEST_MARKER: &str = "best";
pub const TRAIN_LOG: &str = "train.log";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// 0 disables intermediate checkpoints; the final step is always saved
    /// when an output directory is given.
    pub checkpoint_every: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: DEFAULT_LAMBDA,
            lr: 1e-3,
            warmup_steps: 200,
            total_steps: 2000,
            batch_size: 8,
            seed: 0,
            checkpoint_every: 500,
            grad_clip: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        fame::check_lambda(self.lambda)?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        if self.warmup_steps == 0 || self.total_steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("warmup_steps, total_steps and batch_size must be positive".into()));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.grad_clip < 0.0 {
            return Err(Error::Config("grad_clip must be nonnegative".into()));
        }
        Ok(())
    }

    /// Entries for the resolved config; the seed is owned by the caller.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        [
            ("lambda", self.lambda.to_string()),
            ("lr", self.lr.to_string()),
            ("warmup_steps", self.warmup_steps.to_string()),
            ("total_steps", self.total_steps.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "lambda" => self.lambda = kv::parse_value(key, value)?,
            "lr" => self.lr = kv::parse_value(key, value)?,
            "warmup_steps" => self.warmup_steps = kv::parse_value(key, value)?,
            "total_steps" => self.total_steps = kv::parse_value(key, value)?,
            "batch_size" => self.batch_size = kv::parse_value(key, value)?,
            "checkpoint_every" => self.checkpoint_every = kv::parse_value(key, value)?,
            "grad_clip" => self.grad_clip = kv::parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// `lr · min(step / warmup, sqrt(warmup / step))`.
pub fn lr_schedule(step: usize, cfg: &TrainConfig) -> f64 {
    let s = step.max(1) as f64;
    let w = cfg.warmup_steps.max(1) as f64;
    cfg.lr * (s / w).min((w / s).sqrt())
}

/// Optimizer state: step counter and Adam moments in the canonical slot
/// order of [`crate::transformer::Weights::slots`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub step: usize,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// `(checkpoint name, validation ROUGE-L)` of the best checkpoint so far.
    pub best: Option<(String, f64)>,
}

impl TrainState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.weights.slots().iter().map(|t| vec![0.0; t.numel()]).collect();
        TrainState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
            best: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub mle: f64,
    pub topic: f64,
    pub combined: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub lr: f64,
}

/// Mean batch losses and their gradients, one flat vector per slot.
pub fn batch_gradients(
    params: &ModelParams,
    batch: &[&Example],
    frequent: &FrequentSet,
    lambda: f64,
    dropout: Option<&mut Dropout>,
) -> Result<(StepLosses, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let cfg = &params.config;
    let mut tape = Tape::new();
    let w = bind(&mut tape, &params.weights);
    let scale = 1.0 / batch.len() as f64;
    let mut dropout = dropout;
    let mut totals: Option<(Var, Var, Var)> = None;
    for ex in batch {
        let target = TopicTarget::new(&ex.reference, cfg.vocab_size, frequent)?;
        let l = fame::example_losses(
            &mut tape,
            cfg,
            &w,
            &ex.document,
            &ex.reference,
            &target,
            lambda,
            dropout.as_deref_mut(),
        )?;
        totals = Some(match totals {
            None => (l.mle, l.topic, l.combined),
            Some((a, b, c)) => (tape.add(a, l.mle)?, tape.add(b, l.topic)?, tape.add(c, l.combined)?),
        });
    }
    let (mle, topic, combined) = totals.expect("non-empty batch");
    let (mle, topic, combined) = (tape.scale(mle, scale), tape.scale(topic, scale), tape.scale(combined, scale));
    tape.backward(combined)?;
    let grads = w
        .slots()
        .iter()
        .map(|&&var| match tape.grad(var) {
            Some(g) => g.to_vec(),
            None => vec![0.0; tape.value(var).numel()],
        })
        .collect();
    let losses = StepLosses {
        mle: tape.scalar_value(mle),
        topic: tape.scalar_value(topic),
        combined: tape.scalar_value(combined),
        grad_norm: 0.0,
        lr: 0.0,
    };
    Ok((losses, grads))
}

/// One Adam update on the mean combined loss of `batch`. `batch_id`
/// identifies the batch in divergence diagnostics.
pub fn train_step(
    params: &mut ModelParams,
    batch: &[&Example],
    frequent: &FrequentSet,
    cfg: &TrainConfig,
    state: &mut TrainState,
    batch_id: usize,
) -> Result<StepLosses> {
    let step = state.step + 1;
    let mut dropout = (params.config.dropout > 0.0)
        .then(|| Dropout::new(params.config.dropout, cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(step as u64)));
    let (mut losses, mut grads) = batch_gradients(params, batch, frequent, cfg.lambda, dropout.as_mut())?;
    let diverged = |message: String| Error::Diverged {
        step,
        batch: batch_id,
        message,
    };
    if ![losses.mle, losses.topic, losses.combined].iter().all(|l| l.is_finite()) {
        return Err(diverged(format!(
            "non-finite loss (mle {}, topic {}, combined {})",
            losses.mle, losses.topic, losses.combined
        )));
    }
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(diverged("non-finite gradient".into()));
    }
    if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
        let s = cfg.grad_clip / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    let lr = lr_schedule(step, cfg);
    let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
    for (((slot, g), m), v) in params
        .weights
        .slots_mut()
        .into_iter()
        .zip(&grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for (((p, &g), m), v) in slot.values_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
        }
    }
    if !params.is_finite() {
        return Err(diverged("non-finite parameters after update".into()));
    }
    state.step = step;
    losses.grad_norm = norm;
    losses.lr = lr;
    Ok(losses)
}

/// Finite-difference check of the mean combined loss of `batch` with
/// respect to every parameter tensor of `params`.
pub fn grad_check_combined(
    params: &ModelParams,
    batch: &[&Example],
    frequent: &FrequentSet,
    lambda: f64,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let cfg = &params.config;
    let targets = batch
        .iter()
        .map(|ex| TopicTarget::new(&ex.reference, cfg.vocab_size, frequent))
        .collect::<Result<Vec<_>>>()?;
    let tensors: Vec<Tensor> = params.weights.slots().into_iter().cloned().collect();
    let f = |tape: &mut Tape, vars: &[Var]| -> Result<Var> {
        let mut it = vars.iter();
        let w = params.weights.map(|_, _| *it.next().expect("one var per slot"));
        let mut total: Option<Var> = None;
        for (ex, target) in batch.iter().zip(&targets) {
            let l = fame::example_losses(tape, cfg, &w, &ex.document, &ex.reference, target, lambda, None)?;
            total = Some(match total {
                None => l.combined,
                Some(t) => tape.add(t, l.combined)?,
            });
        }
        Ok(tape.scale(total.expect("non-empty batch"), 1.0 / batch.len() as f64))
    };
    grad_check_with(f, &tensors, opts)
}

/// Teacher-forced next-token accuracy under the focused distribution,
/// pooled over all target positions.
pub fn teacher_forced_accuracy(params: &ModelParams, examples: &[Example]) -> Result<f64> {
    let (mut correct, mut total) = (0usize, 0usize);
    for ex in examples {
        let (inputs, targets) = teacher_forcing(&params.config, &ex.reference)?;
        let mut tape = Tape::new();
        let w = bind(&mut tape, &params.weights);
        let fwd = fame::focused_forward(&mut tape, &params.config, &w, &ex.document, &inputs, None)?;
        let logits = tape.value(fwd.logits);
        for (i, &t) in targets.iter().enumerate() {
            correct += usize::from(decoding::sampling::argmax(logits.row(i)) == t);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Input("no target positions".into()));
    }
    Ok(correct as f64 / total as f64)
}

/// Mean ROUGE-L F1 of greedy decodes against the references.
pub fn validation_rouge_l(params: &ModelParams, frequent: &FrequentSet, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Input("empty validation set".into()));
    }
    let cfg = DecodeConfig {
        max_len: params.config.max_output_len,
        ..DecodeConfig::with_strategy(Strategy::Greedy)
    };
    let mut sum = 0.0;
    for ex in examples {
        let input = DecodeInput {
            doc: &ex.document,
            reference: None,
        };
        let hyp = &decoding::decode(params, frequent, &input, &cfg)?[0];
        let reference = ex.reference.strip_suffix(&[crate::data::vocab::EOS]).unwrap_or(&ex.reference);
        sum += metrics::rouge_l_f1(hyp.content(), reference);
    }
    Ok(sum / examples.len() as f64)
}

/// Training and validation examples with the frequent set of their
/// vocabulary.
pub struct TrainData<'a> {
    pub train: &'a [Example],
    /// Falls back to `train` when empty.
    pub valid: &'a [Example],
    pub frequent: &'a FrequentSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub steps: usize,
    pub last: StepLosses,
    /// `(name, validation ROUGE-L)` per saved checkpoint.
    pub checkpoints: Vec<(String, f64)>,
    pub best: Option<String>,
}

pub fn checkpoint_name(step: usize) -> String {
    format!("ckpt-{step:06}")
}

/// Runs `cfg.total_steps` updates over reshuffled epochs, writing one log
/// line per step. With `out_dir`, checkpoints go to `ckpt-NNNNNN/` and the
/// name of the one with the highest validation ROUGE-L (earliest on ties)
/// to the `best` file.
pub fn train(
    params: &mut ModelParams,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    log: &mut dyn Write,
) -> Result<TrainSummary> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Input("empty training corpus".into()));
    }
    if data.frequent.vocab_size() != params.config.vocab_size {
        return Err(Error::Config("frequent set does not match the model vocabulary".into()));
    }
    let valid = if data.valid.is_empty() { data.train } else { data.valid };
    let mut state = TrainState::new(params);
    let mut summary = TrainSummary {
        steps: 0,
        last: StepLosses {
            mle: f64::NAN,
            topic: f64::NAN,
            combined: f64::NAN,
            grad_norm: 0.0,
            lr: 0.0,
        },
        checkpoints: Vec::new(),
        best: None,
    };
    let mut epoch = 0u64;
    let mut batches = Vec::new().into_iter();
    let mut batch_id = 0;
    while state.step < cfg.total_steps {
        let batch = match batches.next() {
            Some(b) => b,
            None => {
                let seed = cfg.seed.wrapping_add(epoch);
                batches = make_batches(data.train.len(), cfg.batch_size, Some(seed))?.into_iter();
                epoch += 1;
                batch_id = 0;
                continue;
            }
        };
        let examples: Vec<&Example> = batch.iter().map(|&i| &data.train[i]).collect();
        let losses = train_step(params, &examples, data.frequent, cfg, &mut state, batch_id)?;
        batch_id += 1;
        writeln!(
            log,
            "step={} lr={:.6e} l_mle={:.6} l_topic={:.6} l={:.6}",
            state.step, losses.lr, losses.mle, losses.topic, losses.combined
        )?;
        summary.last = losses;
        let due = cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0;
        if let Some(dir) = out_dir.filter(|_| due || state.step == cfg.total_steps) {
            let name = checkpoint_name(state.step);
            checkpoint::save(params, &dir.join(&name))?;
            // Score the weights as stored, so selection matches what loads back.
            let stored = checkpoint::round_to_f32(params);
            let score = validation_rouge_l(&stored, data.frequent, valid)?;
            writeln!(log, "checkpoint={name} valid_rouge_l={score:.4}")?;
            if state.best.as_ref().is_none_or(|(_, b)| score > *b) {
                state.best = Some((name.clone(), score));
                std::fs::write(dir.join(BEST_MARKER), format!("{name}\n"))?;
            }
            summary.checkpoints.push((name, score));
        }
    }
    summary.steps = state.step;
    summary.best = state.best.map(|(n, _)| n);
    Ok(summary)
}

/// Reads the `best` marker of a run directory and loads that checkpoint.
pub fn load_best(run_dir: &Path) -> Result<ModelParams> {
    let marker = run_dir.join(BEST_MARKER);
    let name = std::fs::read_to_string(&marker)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", marker.display())))?;
    checkpoint::load(&run_dir.join(name.trim()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let cfg = TrainConfig {
            lr: 0.002,
            warmup_steps: 100,
            ..TrainConfig::default()
        };
        assert_eq!(lr_schedule(100, &cfg), 0.002);
        assert!((lr_schedule(50, &cfg) - 0.001).abs() < 1e-18);
        assert!((lr_schedule(400, &cfg) - 0.001).abs() < 1e-18);
        assert!(lr_schedule(1, &cfg) > 0.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig {
            warmup_steps: 10,
            total_steps: 5,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.total_steps = 10;
        assert!(cfg.validate().is_ok());
        cfg.lambda = 1.5;
        assert!(cfg.validate().is_err());
    }
}
