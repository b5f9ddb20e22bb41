//! Transformer encoder-decoder with a focus-attention vocabulary bias,
//! topic-supervised training and focus-vocabulary decoding, built on a
//! small reverse-mode autodiff core.

pub mod cli;
pub mod data;
pub mod decoding;
pub mod error;
pub mod fame;
pub mod kv;
pub mod metrics;
pub mod numerics;
pub mod training;
pub mod transformer;

pub use error::{Error, Result};
