//! Compares beam search, top-k sampling, nucleus sampling and focus
//! sampling on one document: the samples, their log-probabilities and how
//! many distinct summaries each produces.
//!
//! cargo run --release --example focus_sampling [-- <train steps>]

mod common;

use std::collections::HashSet;

use fame::data::detokenize;
use fame::decoding::{decode, DecodeConfig, DecodeInput, Strategy};

fn main() -> fame::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    let t = common::trained(steps)?;
    let ex = &t.examples[0];
    println!("document:  {}", t.raw[0].document);
    println!("reference: {}\n", t.raw[0].summary);
    let input = DecodeInput {
        doc: &ex.document,
        reference: None,
    };
    let runs = [
        ("beam (4)", DecodeConfig::with_strategy(Strategy::Beam)),
        (
            "top-k (k=5)",
            DecodeConfig {
                sample_k: 5,
                ..DecodeConfig::with_strategy(Strategy::TopK)
            },
        ),
        (
            "nucleus (p=0.9)",
            DecodeConfig {
                nucleus_p: 0.9,
                ..DecodeConfig::with_strategy(Strategy::Nucleus)
            },
        ),
        (
            "focus (k=8)",
            DecodeConfig {
                focus_k: 8,
                ..DecodeConfig::with_strategy(Strategy::Focus)
            },
        ),
    ];
    for (label, cfg) in runs {
        let cfg = DecodeConfig {
            num_samples: 6,
            seed: 42,
            ..cfg
        };
        let hyps = decode(&t.params, &t.frequent, &input, &cfg)?;
        let unique: HashSet<&[usize]> = hyps.iter().map(|h| h.content()).collect();
        println!("{label}: {} sample(s), {} unique", hyps.len(), unique.len());
        for h in &hyps {
            println!("  {:8.3}  {}", h.logprob, detokenize(&h.tokens, &t.vocab));
        }
        println!();
    }
    Ok(())
}
