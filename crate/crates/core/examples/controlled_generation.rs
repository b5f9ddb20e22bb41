//! Restricts beam search to the top-k tokens of the source-conditioned
//! vocabulary distribution for several k, and to the reference vocabulary
//! (oracle focus), printing the allowed-set size and the result.
//!
//! cargo run --release --example controlled_generation [-- <train steps>]

mod common;

use fame::data::detokenize;
use fame::decoding::{decode, topk_focus_vocab, DecodeConfig, DecodeInput, Strategy};
use fame::fame::topic_distribution;
use fame::metrics::rouge_n_f1;
use fame::transformer::encode;

fn main() -> fame::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    let t = common::trained(steps)?;
    let ex = &t.examples[3];
    let reference = &ex.reference[..ex.reference.len() - 1];
    println!("document:  {}", t.raw[3].document);
    println!("reference: {}\n", t.raw[3].summary);
    let input = DecodeInput {
        doc: &ex.document,
        reference: Some(&ex.reference),
    };
    let topic = topic_distribution(&t.params, &encode(&t.params, &ex.document)?)?;
    for k in [1, 3, 6, 12, t.vocab.len()] {
        let allowed = topk_focus_vocab(&topic.logits, k, &t.frequent)?;
        let cfg = DecodeConfig {
            focus_k: k,
            ..DecodeConfig::with_strategy(Strategy::FocusControlled)
        };
        let h = &decode(&t.params, &t.frequent, &input, &cfg)?[0];
        println!(
            "top-{k:<3} ({:2} allowed)  R1 {:6.2}  {}",
            allowed.count(),
            rouge_n_f1(h.content(), reference, 1),
            detokenize(&h.tokens, &t.vocab)
        );
    }
    let oracle = &decode(&t.params, &t.frequent, &input, &DecodeConfig::with_strategy(Strategy::OracleFocus))?[0];
    println!(
        "oracle                R1 {:6.2}  {}",
        rouge_n_f1(oracle.content(), reference, 1),
        detokenize(&oracle.tokens, &t.vocab)
    );
    Ok(())
}
