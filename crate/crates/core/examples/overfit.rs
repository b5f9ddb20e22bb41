//! Trains the tiny model on a 32-example synthetic corpus and reports
//! teacher-forced accuracy and how many references greedy decoding
//! reproduces.
//!
//! cargo run --release --example overfit [-- <steps>]

use std::time::Instant;

use fame::data::{synth_generate, to_examples, vocab_from_corpus, RawExample, SyntheticTaskConfig};
use fame::decoding::{decode, DecodeConfig, DecodeInput, Strategy};
use fame::training::{teacher_forced_accuracy, train_step, TrainConfig, TrainState};
use fame::transformer::{ModelConfig, ModelParams};

fn main() -> fame::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let task = SyntheticTaskConfig::default();
    let raw: Vec<RawExample> = synth_generate(&task)?.into_iter().map(|e| e.raw).collect();
    let (vocab, frequent) = vocab_from_corpus(&raw, 50, 2)?;
    let model_cfg = ModelConfig {
        vocab_size: vocab.len(),
        ..ModelConfig::tiny()
    };
    let examples = to_examples(&raw, &vocab, model_cfg.max_input_len, model_cfg.max_output_len)?;
    let mut params = ModelParams::init(&model_cfg, 0);
    let cfg = TrainConfig {
        total_steps: steps,
        warmup_steps: 100.min(steps),
        lr: 3e-3,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let mut state = TrainState::new(&params);
    let start = Instant::now();
    let refs: Vec<&_> = examples.iter().collect();
    for step in 0..steps {
        let b = (step * cfg.batch_size) % examples.len();
        let batch = &refs[b..(b + cfg.batch_size).min(refs.len())];
        let l = train_step(&mut params, batch, &frequent, &cfg, &mut state, step)?;
        if (step + 1) % 100 == 0 {
            let acc = teacher_forced_accuracy(&params, &examples)?;
            println!(
                "step {:5}  loss {:.4}  mle {:.4}  topic {:.4}  acc {:.4}  ({:.1}s)",
                step + 1,
                l.combined,
                l.mle,
                l.topic,
                acc,
                start.elapsed().as_secs_f64()
            );
        }
    }
    let greedy = DecodeConfig::with_strategy(Strategy::Greedy);
    let mut exact = 0;
    for ex in &examples {
        let input = DecodeInput {
            doc: &ex.document,
            reference: None,
        };
        let hyp = &decode(&params, &frequent, &input, &greedy)?[0];
        exact += usize::from(hyp.tokens == ex.reference);
    }
    println!("greedy exact matches: {exact}/{}", examples.len());
    Ok(())
}
