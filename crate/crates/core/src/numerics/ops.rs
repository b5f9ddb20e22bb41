//! Eager operations on [`Tensor`] values, without recording.

use super::kernels;
use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
        return dim_err(format!("matmul of {sa:?} and {sb:?}"));
    }
    let out = kernels::matmul(a.values(), b.values(), sa[0], sa[1], sb[1]);
    Tensor::matrix(sa[0], sb[1], out)
}

/// Softmax over the last dimension (each row of a matrix).
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    let (_, n) = x.rows_cols();
    let mut out = x.values().to_vec();
    out.chunks_mut(n).for_each(|r| kernels::softmax_row(r, None));
    Tensor::new(x.shape().to_vec(), out)
}

pub fn log_softmax(x: &Tensor) -> Result<Tensor> {
    let (_, n) = x.rows_cols();
    let mut out = x.values().to_vec();
    out.chunks_mut(n).for_each(kernels::log_softmax_row);
    Tensor::new(x.shape().to_vec(), out)
}

pub fn gelu(x: &Tensor) -> Tensor {
    x.map(kernels::gelu)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(kernels::sigmoid)
}

pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (_, n) = x.rows_cols();
    if n < 2 {
        return dim_err(format!("layer_norm needs at least 2 features, got {n}"));
    }
    if gain.shape() != [n] || bias.shape() != [n] {
        return dim_err("layer_norm gain/bias shape");
    }
    let mut out = Vec::with_capacity(x.numel());
    for row in x.values().chunks(n) {
        let (xhat, _) = kernels::normalize_row(row);
        out.extend((0..n).map(|j| xhat[j] * gain.values()[j] + bias.values()[j]));
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// `-logp[target]` for a log-distribution `logp`.
pub fn cross_entropy(logp: &Tensor, target: usize) -> Result<f64> {
    let n = logp.numel();
    if target >= n {
        return Err(Error::Index { index: target, len: n });
    }
    let lse = kernels::log_sum_exp(logp.values());
    if lse.abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "cross_entropy input is not a log-distribution (logsumexp {lse:e})"
        )));
    }
    Ok(-logp.values()[target])
}
