//! Scores hand-written summaries with the overlap, diversity and
//! source-support metrics and prints the report table.
//!
//! cargo run --example score_summaries

use std::collections::HashSet;

use fame::data::vocab::words;
use fame::metrics::{rouge_l_f1, rouge_n_f1, EvalItem, MetricsReport};

fn main() -> fame::Result<()> {
    let document = "the river flooded the old mill after three days of rain";
    let reference = "rain flooded the old mill";
    let candidates = [
        "the old mill flooded after rain",
        "rain flooded the mill",
        "the storm destroyed the bridge",
        "rain flooded the old mill",
    ];
    for c in candidates {
        let (c_toks, r_toks) = (words(c), words(reference));
        println!(
            "{c:<34} R1 {:6.2}  R2 {:6.2}  RL {:6.2}",
            rouge_n_f1(&c_toks, &r_toks, 1),
            rouge_n_f1(&c_toks, &r_toks, 2),
            rouge_l_f1(&c_toks, &r_toks)
        );
    }
    let item = EvalItem {
        document: words(document),
        reference: words(reference),
        samples: candidates.iter().map(|c| words(c)).collect(),
        peakiness: None,
    };
    let frequent: HashSet<String> = ["the", "of"].iter().map(|s| s.to_string()).collect();
    println!();
    print!("{}", MetricsReport::compute(&[item], &frequent)?.to_table());
    Ok(())
}
