//! Shared setup for the examples: a topical synthetic corpus and a tiny
//! model trained on it for a few hundred steps.

use std::time::Instant;

use fame::data::{
    synth_generate, to_examples, vocab_from_corpus, Example, RawExample, SyntheticTaskConfig, Vocabulary,
};
use fame::fame::FrequentSet;
use fame::training::{train_step, TrainConfig, TrainState};
use fame::transformer::{ModelConfig, ModelParams};

pub struct Trained {
    pub vocab: Vocabulary,
    pub frequent: FrequentSet,
    pub raw: Vec<RawExample>,
    pub examples: Vec<Example>,
    pub params: ModelParams,
}

/// Trains the tiny model for `steps` updates on 64 synthetic examples.
pub fn trained(steps: usize) -> fame::Result<Trained> {
    let task = SyntheticTaskConfig {
        num_examples: 64,
        seed: 1,
        ..SyntheticTaskConfig::default()
    };
    let raw: Vec<RawExample> = synth_generate(&task)?.into_iter().map(|e| e.raw).collect();
    let (vocab, frequent) = vocab_from_corpus(&raw, 64, 2)?;
    let config = ModelConfig {
        vocab_size: vocab.len(),
        ..ModelConfig::tiny()
    };
    let examples = to_examples(&raw, &vocab, config.max_input_len, config.max_output_len)?;
    let mut params = ModelParams::init(&config, 0);
    let cfg = TrainConfig {
        total_steps: steps,
        warmup_steps: 100.min(steps),
        lr: 3e-3,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let mut state = TrainState::new(&params);
    let refs: Vec<&Example> = examples.iter().collect();
    let start = Instant::now();
    let mut last = None;
    for step in 0..steps {
        let b = (step * cfg.batch_size) % refs.len();
        let batch = &refs[b..(b + cfg.batch_size).min(refs.len())];
        last = Some(train_step(&mut params, batch, &frequent, &cfg, &mut state, step)?);
    }
    if let Some(l) = last {
        eprintln!(
            "trained {steps} steps in {:.1}s (loss {:.4}, mle {:.4}, topic {:.4})",
            start.elapsed().as_secs_f64(),
            l.combined,
            l.mle,
            l.topic
        );
    }
    Ok(Trained {
        vocab,
        frequent,
        raw,
        examples,
        params,
    })
}
