//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Every primitive applied through a [`Tape`] is recorded together with the
//! operand handles it needs for its backward rule. [`Tape::backward`] walks
//! the record in reverse order and leaves the accumulated gradient in the
//! grad slot of every recorded tensor.

use std::rc::Rc;

use super::kernels;
use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Names of the differentiable primitives, used to address backward rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Primitive {
    Leaf,
    MatMul,
    Transpose,
    Add,
    AddRow,
    Scale,
    MulConst,
    Gelu,
    Sigmoid,
    Softmax,
    LogSoftmax,
    LayerNorm,
    GatherRows,
    SliceCols,
    ConcatCols,
    MaskedMeanRows,
    Nll,
    BceWithLogits,
    Sum,
    Reshape,
}

impl Primitive {
    pub const ALL: [Primitive; 20] = [
        Primitive::Leaf,
        Primitive::MatMul,
        Primitive::Transpose,
        Primitive::Add,
        Primitive::AddRow,
        Primitive::Scale,
        Primitive::MulConst,
        Primitive::Gelu,
        Primitive::Sigmoid,
        Primitive::Softmax,
        Primitive::LogSoftmax,
        Primitive::LayerNorm,
        Primitive::GatherRows,
        Primitive::SliceCols,
        Primitive::ConcatCols,
        Primitive::MaskedMeanRows,
        Primitive::Nll,
        Primitive::BceWithLogits,
        Primitive::Sum,
        Primitive::Reshape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Leaf => "leaf",
            Primitive::MatMul => "matmul",
            Primitive::Transpose => "transpose",
            Primitive::Add => "add",
            Primitive::AddRow => "add_row",
            Primitive::Scale => "scale",
            Primitive::MulConst => "mul_const",
            Primitive::Gelu => "gelu",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Softmax => "softmax",
            Primitive::LogSoftmax => "log_softmax",
            Primitive::LayerNorm => "layer_norm",
            Primitive::GatherRows => "gather_rows",
            Primitive::SliceCols => "slice_cols",
            Primitive::ConcatCols => "concat_cols",
            Primitive::MaskedMeanRows => "masked_mean_rows",
            Primitive::Nll => "nll",
            Primitive::BceWithLogits => "bce_with_logits",
            Primitive::Sum => "sum",
            Primitive::Reshape => "reshape",
        }
    }

    pub fn from_name(name: &str) -> Option<Primitive> {
        Primitive::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// Deliberate corruption of one backward rule. Used to prove that the
/// gradient checker notices a wrong rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackwardFault {
    pub primitive: Primitive,
    pub factor: f64,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Rc<[f64]>),
    Gelu(Var),
    Sigmoid(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    GatherRows(Var, Vec<usize>),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    MaskedMeanRows(Var, Vec<bool>),
    Nll(Var, Vec<usize>),
    BceWithLogits(Var, Vec<bool>),
    Sum(Var),
    Reshape(Var),
}

impl Op {
    fn primitive(&self) -> Primitive {
        match self {
            Op::Leaf => Primitive::Leaf,
            Op::MatMul(..) => Primitive::MatMul,
            Op::Transpose(_) => Primitive::Transpose,
            Op::Add(..) => Primitive::Add,
            Op::AddRow(..) => Primitive::AddRow,
            Op::Scale(..) => Primitive::Scale,
            Op::MulConst(..) => Primitive::MulConst,
            Op::Gelu(_) => Primitive::Gelu,
            Op::Sigmoid(_) => Primitive::Sigmoid,
            Op::Softmax(_) => Primitive::Softmax,
            Op::LogSoftmax(_) => Primitive::LogSoftmax,
            Op::LayerNorm { .. } => Primitive::LayerNorm,
            Op::GatherRows(..) => Primitive::GatherRows,
            Op::SliceCols { .. } => Primitive::SliceCols,
            Op::ConcatCols(_) => Primitive::ConcatCols,
            Op::MaskedMeanRows(..) => Primitive::MaskedMeanRows,
            Op::Nll(..) => Primitive::Nll,
            Op::BceWithLogits(..) => Primitive::BceWithLogits,
            Op::Sum(_) => Primitive::Sum,
            Op::Reshape(_) => Primitive::Reshape,
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of primitive applications. Confined to one thread.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<BackwardFault>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fault(fault: BackwardFault) -> Self {
        Tape {
            nodes: Vec::new(),
            fault: Some(fault),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        let mut value = value;
        value.clear_grad();
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated by the last [`Tape::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.value(v).values()[0]
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn rc(&self, v: Var) -> (usize, usize) {
        self.value(v).rows_cols()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return dim_err(format!("matmul of {sa:?} and {sb:?}"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = kernels::matmul(self.value(a).values(), self.value(b).values(), m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return dim_err(format!("transpose of {s:?}"));
        }
        let (m, n) = (s[0], s[1]);
        let out = kernels::transpose(self.value(a).values(), m, n);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::Transpose(a)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return dim_err(format!("add of {:?} and {:?}", self.shape(a), self.shape(b)));
        }
        let out: Vec<f64> = (self.value(a).values().iter())
            .zip(self.value(b).values())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    /// Adds the vector `b[n]` to every row of `a[m×n]`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, n) = self.rc(a);
        if self.shape(b) != [n] {
            return dim_err(format!("add_row of {:?} and {:?}", self.shape(a), self.shape(b)));
        }
        let bias = self.value(b).values();
        let out: Vec<f64> = (self.value(a).values().iter().enumerate())
            .map(|(i, &x)| x + bias[i % n])
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(t, Op::AddRow(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a).scaled(c);
        self.push(t, Op::Scale(a, c))
    }

    /// Elementwise product with a constant (non-differentiable) factor.
    pub fn mul_const(&mut self, a: Var, factor: Rc<[f64]>) -> Result<Var> {
        if factor.len() != self.value(a).numel() {
            return dim_err("mul_const factor length");
        }
        let out: Vec<f64> = (self.value(a).values().iter())
            .zip(factor.iter())
            .map(|(x, f)| x * f)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(t, Op::MulConst(a, factor)))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(kernels::gelu);
        self.push(t, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(kernels::sigmoid);
        self.push(t, Op::Sigmoid(a))
    }

    /// Row-wise softmax. `mask`, when given, has one flag per element;
    /// masked entries come out exactly 0. Every row needs one unmasked entry.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (_, n) = self.rc(a);
        let mut out = self.value(a).values().to_vec();
        if let Some(m) = mask {
            if m.len() != out.len() {
                return dim_err("softmax mask length");
            }
            for (row, mrow) in m.chunks(n).enumerate() {
                if !mrow.iter().any(|&b| b) {
                    return Err(Error::Contract(format!("softmax row {row} fully masked")));
                }
            }
        }
        for (r, row) in out.chunks_mut(n).enumerate() {
            kernels::softmax_row(row, mask.map(|m| &m[r * n..(r + 1) * n]));
        }
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(t, Op::Softmax(a)))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let (_, n) = self.rc(a);
        let mut out = self.value(a).values().to_vec();
        out.chunks_mut(n).for_each(kernels::log_softmax_row);
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(t, Op::LogSoftmax(a)))
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.rc(x);
        if n < 2 {
            return dim_err(format!("layer_norm needs at least 2 features, got {n}"));
        }
        if self.shape(gain) != [n] || self.shape(bias) != [n] {
            return dim_err("layer_norm gain/bias shape");
        }
        let mut normalized = Vec::with_capacity(m * n);
        let mut inv_std = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m * n);
        let (g, b) = (self.value(gain).values(), self.value(bias).values());
        for row in self.value(x).values().chunks(n) {
            let (xhat, istd) = kernels::normalize_row(row);
            out.extend(xhat.iter().enumerate().map(|(j, v)| v * g[j] + b[j]));
            normalized.extend(xhat);
            inv_std.push(istd);
        }
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
        ))
    }

    /// Selects rows of `table[r×c]`, producing `[ids.len()×c]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (r, c) = self.rc(table);
        if ids.is_empty() {
            return dim_err("gather_rows with no ids");
        }
        let mut out = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= r {
                return Err(Error::Index { index: id, len: r });
            }
            out.extend_from_slice(self.value(table).row(id));
        }
        let t = Tensor::matrix(ids.len(), c, out)?;
        Ok(self.push(t, Op::GatherRows(table, ids.to_vec())))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.rc(x);
        if len == 0 || start + len > n {
            return dim_err(format!("slice_cols {start}..{} of width {n}", start + len));
        }
        let vals = self.value(x).values();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&vals[i * n + start..i * n + start + len]);
        }
        let t = Tensor::matrix(m, len, out)?;
        Ok(self.push(t, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return dim_err("concat_cols of nothing");
        };
        let (m, _) = self.rc(first);
        if parts.iter().any(|&p| self.rc(p).0 != m) {
            return dim_err("concat_cols row counts differ");
        }
        let width: usize = parts.iter().map(|&p| self.rc(p).1).sum();
        let mut out = Vec::with_capacity(m * width);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let t = Tensor::matrix(m, width, out)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec())))
    }

    /// Mean of the rows of `x[m×n]` whose mask flag is set, as a vector `[n]`.
    pub fn masked_mean_rows(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let (m, n) = self.rc(x);
        if mask.len() != m {
            return dim_err("masked_mean_rows mask length");
        }
        let count = mask.iter().filter(|&&b| b).count();
        if count == 0 {
            return Err(Error::Input("masked mean over no rows".into()));
        }
        let mut out = vec![0.0; n];
        for (i, _) in mask.iter().enumerate().filter(|(_, &b)| b) {
            for (o, v) in out.iter_mut().zip(self.value(x).row(i)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= count as f64);
        let t = Tensor::vector(out)?;
        Ok(self.push(t, Op::MaskedMeanRows(x, mask.to_vec())))
    }

    /// Mean negative log-likelihood of `targets` under row-wise log-probabilities.
    pub fn nll(&mut self, logp: Var, targets: &[usize]) -> Result<Var> {
        let (m, n) = self.rc(logp);
        if targets.len() != m {
            return dim_err(format!("nll: {} targets for {m} rows", targets.len()));
        }
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= n {
                return Err(Error::Index { index: t, len: n });
            }
            total -= self.value(logp).row(i)[t];
        }
        Ok(self.push(Tensor::scalar(total / m as f64), Op::Nll(logp, targets.to_vec())))
    }

    /// Mean binary cross-entropy of logits against boolean targets,
    /// `mean(softplus(x) - y*x)`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[bool]) -> Result<Var> {
        let vals = self.value(logits).values();
        if targets.len() != vals.len() {
            return dim_err("bce_with_logits target length");
        }
        let total: f64 = (vals.iter().zip(targets))
            .map(|(&x, &y)| kernels::softplus(x) - if y { x } else { 0.0 })
            .sum();
        let loss = total / vals.len() as f64;
        Ok(self.push(Tensor::scalar(loss), Op::BceWithLogits(logits, targets.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).values().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a).reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(a)))
    }

    /// Runs the backward pass from a scalar root, leaving gradients in the
    /// grad slot of every recorded tensor that influences the root.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).numel() != 1 {
            return dim_err(format!("backward from non-scalar {:?}", self.shape(root)));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let Some(mut g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let Some(fault) = self.fault {
                if fault.primitive == node.op.primitive() && fault.primitive != Primitive::Leaf {
                    g.iter_mut().for_each(|v| *v *= fault.factor);
                }
            }
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            match g {
                Some(g) => node.value.set_grad(g)?,
                None => node.value.clear_grad(),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.values();
        let val = |v: Var| self.nodes[v.0].value.values();
        let rc = |v: Var| self.nodes[v.0].value.rows_cols();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = rc(*a);
                let n = rc(*b).1;
                let da = kernels::matmul_bt(g, val(*b), m, n, k);
                let db = kernels::matmul_at(val(*a), g, m, k, n);
                accumulate(grads, *a, &da);
                accumulate(grads, *b, &db);
            }
            Op::Transpose(a) => {
                let (m, n) = rc(*a);
                accumulate(grads, *a, &kernels::transpose(g, n, m));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g);
                accumulate(grads, *b, g);
            }
            Op::AddRow(a, b) => {
                accumulate(grads, *a, g);
                let n = rc(*b).1;
                let mut db = vec![0.0; n];
                for row in g.chunks(n) {
                    db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                }
                accumulate(grads, *b, &db);
            }
            Op::Scale(a, c) => {
                let da: Vec<f64> = g.iter().map(|v| v * c).collect();
                accumulate(grads, *a, &da);
            }
            Op::MulConst(a, f) => {
                let da: Vec<f64> = g.iter().zip(f.iter()).map(|(v, f)| v * f).collect();
                accumulate(grads, *a, &da);
            }
            Op::Gelu(a) => {
                let da: Vec<f64> = (g.iter().zip(val(*a)))
                    .map(|(v, &x)| v * kernels::gelu_grad(x))
                    .collect();
                accumulate(grads, *a, &da);
            }
            Op::Sigmoid(a) => {
                let da: Vec<f64> = g.iter().zip(out).map(|(v, s)| v * s * (1.0 - s)).collect();
                accumulate(grads, *a, &da);
            }
            Op::Softmax(a) => {
                let n = rc(*a).1;
                let mut da = Vec::with_capacity(g.len());
                for (grow, yrow) in g.chunks(n).zip(out.chunks(n)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(d, y)| d * y).sum();
                    da.extend(grow.iter().zip(yrow).map(|(d, y)| y * (d - dot)));
                }
                accumulate(grads, *a, &da);
            }
            Op::LogSoftmax(a) => {
                let n = rc(*a).1;
                let mut da = Vec::with_capacity(g.len());
                for (grow, lrow) in g.chunks(n).zip(out.chunks(n)) {
                    let total: f64 = grow.iter().sum();
                    da.extend(grow.iter().zip(lrow).map(|(d, l)| d - l.exp() * total));
                }
                accumulate(grads, *a, &da);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let n = rc(*x).1;
                let gv = val(*gain);
                let nf = n as f64;
                let mut dx = Vec::with_capacity(g.len());
                let mut dgain = vec![0.0; n];
                let mut dbias = vec![0.0; n];
                for ((grow, xhat), istd) in g.chunks(n).zip(normalized.chunks(n)).zip(inv_std) {
                    let dxhat: Vec<f64> = grow.iter().zip(gv).map(|(d, g)| d * g).collect();
                    let sum_d: f64 = dxhat.iter().sum();
                    let sum_dx: f64 = dxhat.iter().zip(xhat).map(|(d, x)| d * x).sum();
                    dx.extend(
                        (dxhat.iter().zip(xhat))
                            .map(|(d, xh)| istd / nf * (nf * d - sum_d - xh * sum_dx)),
                    );
                    for j in 0..n {
                        dgain[j] += grow[j] * xhat[j];
                        dbias[j] += grow[j];
                    }
                }
                accumulate(grads, *x, &dx);
                accumulate(grads, *gain, &dgain);
                accumulate(grads, *bias, &dbias);
            }
            Op::GatherRows(table, ids) => {
                let (r, c) = rc(*table);
                let mut dt = vec![0.0; r * c];
                for (row, &id) in g.chunks(c).zip(ids) {
                    dt[id * c..(id + 1) * c]
                        .iter_mut()
                        .zip(row)
                        .for_each(|(d, v)| *d += v);
                }
                accumulate(grads, *table, &dt);
            }
            Op::SliceCols { x, start } => {
                let (m, n) = rc(*x);
                let len = g.len() / m;
                let mut dx = vec![0.0; m * n];
                for (i, row) in g.chunks(len).enumerate() {
                    dx[i * n + start..i * n + start + len].copy_from_slice(row);
                }
                accumulate(grads, *x, &dx);
            }
            Op::ConcatCols(parts) => {
                let width = node.value.rows_cols().1;
                let mut offset = 0;
                for &p in parts {
                    let (m, w) = rc(p);
                    let mut dp = Vec::with_capacity(m * w);
                    for i in 0..m {
                        dp.extend_from_slice(&g[i * width + offset..i * width + offset + w]);
                    }
                    accumulate(grads, p, &dp);
                    offset += w;
                }
            }
            Op::MaskedMeanRows(x, mask) => {
                let (m, n) = rc(*x);
                let count = mask.iter().filter(|&&b| b).count() as f64;
                let mut dx = vec![0.0; m * n];
                for (i, _) in mask.iter().enumerate().filter(|(_, &b)| b) {
                    for j in 0..n {
                        dx[i * n + j] = g[j] / count;
                    }
                }
                accumulate(grads, *x, &dx);
            }
            Op::Nll(logp, targets) => {
                let (m, n) = rc(*logp);
                let mut dl = vec![0.0; m * n];
                for (i, &t) in targets.iter().enumerate() {
                    dl[i * n + t] = -g[0] / m as f64;
                }
                accumulate(grads, *logp, &dl);
            }
            Op::BceWithLogits(logits, targets) => {
                let x = val(*logits);
                let scale = g[0] / x.len() as f64;
                let dl: Vec<f64> = (x.iter().zip(targets))
                    .map(|(&x, &y)| scale * (kernels::sigmoid(x) - if y { 1.0 } else { 0.0 }))
                    .collect();
                accumulate(grads, *logits, &dl);
            }
            Op::Sum(a) => {
                let n = val(*a).len();
                accumulate(grads, *a, &vec![g[0]; n]);
            }
            Op::Reshape(a) => accumulate(grads, *a, g),
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g.to_vec()),
    }
}
