//! Generation strategies: greedy, beam, top-k / nucleus sampling and the
//! focus-vocabulary variants.

pub mod config;
pub mod focus_vocab;
pub mod output;
pub mod sampling;
pub mod search;
pub mod strategies;

pub use config::{Combine, DecodeConfig, MaskMode, Strategy};
pub use focus_vocab::{masked_distribution, sample_focus_vocab, topk_focus_vocab, AllowedVocab, Provenance};
pub use output::{load_predictions, save_predictions, Prediction};
pub use sampling::{truncate_nucleus, truncate_top_k};
pub use search::{beam_search, greedy, sample_sequence, FnScorer, Hypothesis, StepScorer};
pub use strategies::{decode, DecodeInput, ModelScorer};
