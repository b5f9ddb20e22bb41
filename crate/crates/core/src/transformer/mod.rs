//! Transformer encoder-decoder with tied input/output embeddings.

pub mod checkpoint;
mod config;
mod model;
mod params;

pub use config::{HeadSelection, ModelConfig, RESERVED_TOKENS};
pub use model::{
    bind, decode_step, encode, mle_loss, mle_loss_on, output_logits, positional_encoding,
    source_mask, teacher_forcing, DecoderOutput, DecoderStepState, Dropout, EncoderState, Graph,
};
pub use params::{Block, CrossBlock, ModelParams, Weights};
