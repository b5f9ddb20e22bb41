//! Prints the highest-scoring tokens of the source-conditioned vocabulary
//! distribution for a few documents, with its peakiness, next to the
//! peakiness of an oracle distribution built from the reference.
//!
//! cargo run --release --example inspect_topic [-- <train steps>]

mod common;

use fame::fame::{oracle_topic, peakiness, topic_distribution};
use fame::transformer::encode;

fn main() -> fame::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    let t = common::trained(steps)?;
    for (raw, ex) in t.raw.iter().zip(&t.examples).take(4) {
        let enc = encode(&t.params, &ex.document)?;
        let topic = topic_distribution(&t.params, &enc)?;
        let l = topic.logits.values();
        let mut order: Vec<usize> = (0..l.len()).collect();
        order.sort_by(|&a, &b| l[b].total_cmp(&l[a]).then(a.cmp(&b)));
        let top: Vec<String> = order[..8]
            .iter()
            .map(|&i| {
                let mark = if t.frequent.contains(i) { "*" } else { "" };
                format!("{}{mark}:{:.1}", t.vocab.token(i), l[i])
            })
            .collect();
        let oracle = oracle_topic(&ex.reference, l.len(), &enc.token_mask)?;
        println!("document:  {}", raw.document);
        println!("reference: {}", raw.summary);
        println!("top tokens (* = frequent): {}", top.join(" "));
        println!(
            "peakiness {:.3} (oracle {:.3})\n",
            peakiness(&topic.logits)?,
            peakiness(&oracle.logits)?
        );
    }
    Ok(())
}
