//! Dense `f64` tensors with tape-based reverse-mode differentiation.

pub mod gradcheck;
pub mod kernels;
pub mod ops;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_with, GradCheckOptions, GradCheckReport};
pub use ops::{cross_entropy, gelu, layer_norm, log_softmax, matmul, sigmoid, softmax};
pub use tape::{BackwardFault, Primitive, Tape, Var};
pub use tensor::Tensor;
