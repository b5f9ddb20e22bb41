//! Vocabulary, corpus ingestion and the synthetic task.

pub mod corpus;
pub mod synth;
pub mod vocab;

pub use corpus::{
    load_jsonl, make_batches, save_jsonl, to_example, to_examples, vocab_from_corpus, Example, RawExample,
};
pub use synth::{synth_generate, SyntheticExample, SyntheticTaskConfig};
pub use vocab::{build_vocab, detokenize, tokenize, Vocabulary};
