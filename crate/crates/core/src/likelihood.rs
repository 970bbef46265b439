//! Binomial negative log-likelihood on the logit scale.
//!
//! `L(θ) = Σ_t (−y_t θ_t + n_t log(1 + e^{θ_t}))`. The Hessian is diagonal with
//! entries `n_t σ(θ_t)(1 − σ(θ_t)) ≤ n_t / 4`, which gives the global step bound.

use crate::error::{Error, Result};
use crate::stream::StreamSeries;

/// Natural parameters are clamped to `[-THETA_CLAMP, THETA_CLAMP]` wherever a
/// proportion of exactly 0 or 1 would send them to infinity.
pub const THETA_CLAMP: f64 = 15.0;

/// Curvature bounds of the negative log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureBounds {
    pub lipschitz_l: f64,
    pub mu_min: f64,
}

pub fn expit(theta: f64) -> f64 {
    if theta >= 0.0 {
        1.0 / (1.0 + (-theta).exp())
    } else {
        let e = theta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^θ)` without overflow.
pub fn softplus(theta: f64) -> f64 {
    theta.max(0.0) + (-theta.abs()).exp().ln_1p()
}

/// Logit of `p`, with 0 and 1 mapped to `∓THETA_CLAMP`.
pub fn logit_clamped(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("proportion {p} outside [0, 1]")));
    }
    let theta = (p / (1.0 - p)).ln();
    Ok(theta.clamp(-THETA_CLAMP, THETA_CLAMP))
}

/// Clamps a proportion to the range reachable by a clamped natural parameter.
pub fn clamp_proportion(p: f64) -> f64 {
    p.clamp(expit(-THETA_CLAMP), expit(THETA_CLAMP))
}

/// Neumaier-compensated sum; objective traces are compared at 1e-10 slack.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn check_len(series: &StreamSeries, theta: &[f64]) -> Result<()> {
    if theta.len() != series.len() {
        return Err(Error::LengthMismatch {
            expected: series.len(),
            actual: theta.len(),
        });
    }
    Ok(())
}

pub(crate) fn nll_raw(y: &[f64], n: &[f64], theta: &[f64]) -> f64 {
    compensated_sum(
        y.iter()
            .zip(n)
            .zip(theta)
            .map(|((&y, &n), &t)| n * softplus(t) - y * t),
    )
}

pub(crate) fn nll_grad_raw(y: &[f64], n: &[f64], theta: &[f64], out: &mut [f64]) {
    for (((g, &y), &n), &t) in out.iter_mut().zip(y).zip(n).zip(theta) {
        *g = n * expit(t) - y;
    }
}

pub fn nll(series: &StreamSeries, theta: &[f64]) -> Result<f64> {
    check_len(series, theta)?;
    Ok(nll_raw(&series.y_f64(), &series.n_f64(), theta))
}

pub fn nll_grad(series: &StreamSeries, theta: &[f64]) -> Result<Vec<f64>> {
    check_len(series, theta)?;
    let mut g = vec![0.0; theta.len()];
    nll_grad_raw(&series.y_f64(), &series.n_f64(), theta, &mut g);
    Ok(g)
}

/// Diagonal of the Hessian at `theta`.
pub fn nll_hessian_diag(series: &StreamSeries, theta: &[f64]) -> Result<Vec<f64>> {
    check_len(series, theta)?;
    Ok(series
        .points()
        .iter()
        .zip(theta)
        .map(|(p, &t)| {
            let s = expit(t);
            p.n as f64 * s * (1.0 - s)
        })
        .collect())
}

/// `max_t n_t / 4`, an upper bound on the Hessian's largest eigenvalue.
pub fn lipschitz_bound(series: &StreamSeries) -> f64 {
    series.points().iter().map(|p| p.n).max().unwrap_or(0) as f64 / 4.0
}

/// Smallest Hessian diagonal entry at `theta`.
pub fn mu_min_at(series: &StreamSeries, theta: &[f64]) -> Result<f64> {
    Ok(nll_hessian_diag(series, theta)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

pub fn curvature_bounds(series: &StreamSeries, theta: &[f64]) -> Result<CurvatureBounds> {
    Ok(CurvatureBounds {
        lipschitz_l: lipschitz_bound(series),
        mu_min: mu_min_at(series, theta)?,
    })
}

/// Binomial log-likelihood kernel `y log p + (n − y) log(1 − p)` with `0·log 0 = 0`.
pub fn binomial_loglik(y: f64, n: f64, p: f64) -> f64 {
    let mut ll = 0.0;
    if y > 0.0 {
        ll += y * p.ln();
    }
    if n - y > 0.0 {
        ll += (n - y) * (1.0 - p).ln();
    }
    ll
}
