//! Central finite-difference verification of tape gradients.

use super::tape::{BackwardFault, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Denominator floor of the relative error. Coordinates whose analytic and
/// numeric gradients are both below it are compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub tol: f64,
    /// Check every `stride`-th coordinate of each parameter.
    pub stride: usize,
    pub fault: Option<BackwardFault>,
}

impl GradCheckOptions {
    pub fn new(eps: f64, tol: f64) -> Self {
        GradCheckOptions {
            eps,
            tol,
            stride: 1,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// (parameter index, flat coordinate) of the largest relative error.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub tol: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares the tape gradient of the scalar `f` with central differences.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    grad_check_with(f, params, &GradCheckOptions::new(eps, tol))
}

pub fn grad_check_with<F>(f: F, params: &[Tensor], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-6..=1e-3).contains(&opts.eps) {
        return Err(Error::Config(format!("eps {} outside [1e-6, 1e-3]", opts.eps)));
    }
    let mut tape = match opts.fault {
        Some(fault) => Tape::with_fault(fault),
        None => Tape::new(),
    };
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let root = f(&mut tape, &vars)?;
    let base = tape.scalar_value(root);
    if !base.is_finite() {
        return Err(Error::Evaluation(format!("f is not finite at params ({base})")));
    }
    tape.backward(root)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| tape.grad(v).map_or_else(|| vec![0.0; p.numel()], <[f64]>::to_vec))
        .collect();

    let evaluate = |perturbed: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|p| t.leaf(p.clone())).collect();
        let out = f(&mut t, &vs)?;
        let v = t.scalar_value(out);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation(format!("f is not finite under perturbation ({v})")))
        }
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: None,
        checked: 0,
        tol: opts.tol,
        passed: true,
    };
    for p in 0..params.len() {
        for i in (0..params[p].numel()).step_by(opts.stride.max(1)) {
            let orig = params[p].values()[i];
            work[p].values_mut()[i] = orig + opts.eps;
            let plus = evaluate(&work)?;
            work[p].values_mut()[i] = orig - opts.eps;
            let minus = evaluate(&work)?;
            work[p].values_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let a = analytic[p][i];
            let rel = relative_error(a, numeric);
            report.max_abs_err = report.max_abs_err.max((a - numeric).abs());
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = rel.max(report.max_rel_err);
                report.worst = Some((p, i));
            }
            report.checked += 1;
        }
    }
    report.passed = report.max_rel_err <= opts.tol;
    Ok(report)
}
