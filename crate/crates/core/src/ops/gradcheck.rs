//! Finite-difference gradient checking.
//!
//! An operation's backward pass is validated by comparing its analytic
//! gradient of a scalar loss against central differences
//! `(L(x + h) - L(x - h)) / 2h`, element by element, in `f64`. Tests
//! reduce an operation's tensor output to a scalar with a fixed random
//! coefficient for every output element so all output paths are exercised.

use crate::tensor::Tensor;

/// Tolerances for a finite-difference comparison. An element passes when
/// `|analytic - numeric| <= abs_tol + rel_tol * max(|analytic|, |numeric|)`.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckCfg {
    /// Central-difference step.
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for GradCheckCfg {
    fn default() -> Self {
        GradCheckCfg {
            step: 1e-5,
            rel_tol: 1e-4,
            abs_tol: 1e-8,
        }
    }
}

/// Outcome of a gradient check, with enough detail to debug a failure.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub ok: bool,
    /// Index of the worst element in the flattened input.
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    /// `|analytic - numeric|` at the worst element.
    pub worst_abs_err: f64,
    pub elements_checked: usize,
}

/// Compares the analytic gradient of `loss` at `at` against central
/// differences over every input element.
///
/// `loss` maps an input tensor to a scalar; `grad` returns the analytic
/// gradient of that scalar at the given input.
pub fn check_gradients(
    loss: &dyn Fn(&Tensor<f64>) -> f64,
    grad: &dyn Fn(&Tensor<f64>) -> Tensor<f64>,
    at: &Tensor<f64>,
    cfg: GradCheckCfg,
) -> GradCheckReport {
    let analytic = grad(at);
    assert_eq!(
        analytic.shape, at.shape,
        "analytic gradient shape does not match input"
    );

    let mut report = GradCheckReport {
        ok: true,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        worst_abs_err: 0.0,
        elements_checked: at.numel(),
    };
    let mut probe = at.clone();
    let mut worst_margin = f64::NEG_INFINITY;
    for i in 0..at.numel() {
        let orig = probe.data[i];
        probe.data[i] = orig + cfg.step;
        let up = loss(&probe);
        probe.data[i] = orig - cfg.step;
        let down = loss(&probe);
        probe.data[i] = orig;

        let numeric = (up - down) / (2.0 * cfg.step);
        let a = analytic.data[i];
        let err = (a - numeric).abs();
        let allowed = cfg.abs_tol + cfg.rel_tol * a.abs().max(numeric.abs());
        let margin = err - allowed;
        if margin > worst_margin {
            worst_margin = margin;
            report.worst_index = i;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
            report.worst_abs_err = err;
        }
        if margin > 0.0 {
            report.ok = false;
        }
    }
    report
}
