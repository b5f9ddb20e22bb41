//! Checks the tape gradient of the combined loss against central finite
//! differences, for several loss weightings, then shows the checker
//! catching a deliberately corrupted backward rule.
//!
//! cargo run --release --example gradcheck

use std::time::Instant;

use fame::data::vocab::EOS;
use fame::data::Example;
use fame::fame::FrequentSet;
use fame::numerics::{BackwardFault, GradCheckOptions, Primitive};
use fame::training::grad_check_combined;
use fame::transformer::{ModelConfig, ModelParams};

fn main() -> fame::Result<()> {
    let config = ModelConfig::tiny();
    let params = ModelParams::init(&config, 7);
    println!("model: {} parameters", params.num_parameters());
    let batch = [
        Example {
            document: vec![10, 11, 12, 13, 14],
            reference: vec![11, 13, 20, EOS],
        },
        Example {
            document: vec![30, 31, 5, 32],
            reference: vec![5, 31, EOS],
        },
    ];
    let refs: Vec<&Example> = batch.iter().collect();
    let frequent = FrequentSet::from_ids(config.vocab_size, [5]);
    let opts = GradCheckOptions::new(1e-5, 1e-4);

    for lambda in [0.0, 0.5, 1.0] {
        let start = Instant::now();
        let r = grad_check_combined(&params, &refs, &frequent, lambda, &opts)?;
        println!(
            "lambda {lambda:.1}: {} coordinates, max rel err {:.2e}, max abs err {:.2e} -> {} ({:.1}s)",
            r.checked,
            r.max_rel_err,
            r.max_abs_err,
            if r.passed { "ok" } else { "FAILED" },
            start.elapsed().as_secs_f64()
        );
    }

    for primitive in [Primitive::Gelu, Primitive::LayerNorm, Primitive::Softmax] {
        let faulty = GradCheckOptions {
            fault: Some(BackwardFault { primitive, factor: 1.5 }),
            stride: 7,
            ..opts.clone()
        };
        let r = grad_check_combined(&params, &refs, &frequent, 0.5, &faulty)?;
        println!(
            "{} backward scaled by 1.5: max rel err {:.2e} -> {}",
            primitive.name(),
            r.max_rel_err,
            if r.passed { "missed" } else { "detected" }
        );
    }
    Ok(())
}
