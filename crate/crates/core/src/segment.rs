//! Penalized binomial segmentation by proximal gradient descent.
//!
//! Minimizes `φ(θ) = L(θ) + λ H(θ)` with fixed step `1/L_step`, where
//! `L_step ≥ max_t n_t / 4`. Each iteration takes a gradient step on the
//! likelihood and applies the proximal map of `(λ / L_step) H`, restricted to
//! `|θ_t| ≤ THETA_CLAMP`.

use crate::error::{Error, Result};
use crate::likelihood::{
    expit, lipschitz_bound, logit_clamped, mu_min_at, nll_grad_raw, nll_raw, THETA_CLAMP,
};
use crate::prox::{
    prox_fused_l0_boxed, prox_fused_l1, prox_fused_l1_weighted, AdmmConfig, AdmmSolver, PenaltyKind,
    PenaltySpec,
};
use crate::stream::{global_proportion, StreamSeries};

/// Absolute slack allowed when checking that the objective never increases.
pub const MONOTONE_SLACK: f64 = 1e-10;

/// Default tolerance on the proportion scale for calling a jump.
pub const DEFAULT_JUMP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Inverse step size; `None` uses `lipschitz_bound(series)`.
    pub step_l: Option<f64>,
    pub max_iter: usize,
    /// Stop once `‖θ_{k+1} − θ_k‖² ≤ eps_stationary`.
    pub eps_stationary: f64,
    pub record_trace: bool,
    /// Used by the trend-filter prox.
    pub admm: AdmmConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step_l: None,
            max_iter: 50_000,
            eps_stationary: 1e-10,
            record_trace: true,
            admm: AdmmConfig::default(),
        }
    }
}

/// How a fit was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum FitKind {
    Penalized(PenaltySpec),
    /// Piecewise-constant maximum likelihood with fixed jump locations.
    Pruned { alpha: f64 },
}

impl FitKind {
    pub fn label(&self) -> &'static str {
        match self {
            FitKind::Penalized(p) => p.kind.as_str(),
            FitKind::Pruned { .. } => "pruned",
        }
    }

    pub fn penalty_kind(&self) -> Option<PenaltyKind> {
        match self {
            FitKind::Penalized(p) => Some(p.kind),
            FitKind::Pruned { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitDiagnostics {
    pub final_step_l: f64,
    pub lipschitz_l: f64,
    pub mu_min_final: f64,
    /// Contraction factor of the linear rate bound for the convex case.
    pub linear_rate_gamma: f64,
    /// ADMM iterations per outer step (trend filter only).
    pub admm_iterations: Vec<usize>,
    /// Set when an inexact prox could no longer decrease the objective.
    pub stalled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedFit {
    pub theta_hat: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub kind: FitKind,
    pub lambda: f64,
    /// `φ(θ_k)` for `k = 0..=iterations`, when recorded.
    pub objective_trace: Option<Vec<f64>>,
    /// `‖θ_{k+1} − θ_k‖²` for `k = 0..iterations`, when recorded.
    pub step_trace: Option<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: FitDiagnostics,
}

impl SegmentedFit {
    pub fn len(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_hat.is_empty()
    }

    /// Builds a fit directly from natural parameters.
    pub fn from_theta(theta_hat: Vec<f64>, kind: FitKind, lambda: f64) -> Self {
        let p_hat = theta_hat.iter().map(|&t| expit(t)).collect();
        Self {
            theta_hat,
            p_hat,
            kind,
            lambda,
            objective_trace: None,
            step_trace: None,
            iterations: 0,
            converged: true,
            diagnostics: FitDiagnostics::default(),
        }
    }
}

/// A discontinuity between points `index` and `index + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpLocation {
    pub index: usize,
    pub left_level: f64,
    pub right_level: f64,
    pub magnitude: f64,
}

/// `φ(θ) = L(θ) + λ H(θ)`.
pub fn objective(series: &StreamSeries, theta: &[f64], penalty: &PenaltySpec, lambda: f64) -> Result<f64> {
    if theta.len() != series.len() {
        return Err(Error::LengthMismatch {
            expected: series.len(),
            actual: theta.len(),
        });
    }
    let h = penalty.evaluate(theta)?;
    let l = nll_raw(&series.y_f64(), &series.n_f64(), theta);
    Ok(if lambda == 0.0 { l } else { l + lambda * h })
}

fn linear_rate_gamma(mu: f64, step_l: f64) -> f64 {
    if step_l <= 0.0 {
        return f64::NAN;
    }
    // The first branch needs μ ≥ 2L, which cannot happen when L bounds the
    // Hessian; it is kept so the reported value follows the stated case split.
    if mu / step_l >= 2.0 {
        step_l / mu
    } else {
        1.0 - mu / (4.0 * step_l)
    }
}

enum Prox {
    L1Uniform,
    L1Weighted(Vec<f64>),
    L0,
    Trend(Box<AdmmSolver>),
}

/// Fits `θ̂` for one penalty and one `λ`.
pub fn fit_segmentation(
    series: &StreamSeries,
    penalty: &PenaltySpec,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<SegmentedFit> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if cfg.max_iter == 0 || !(cfg.eps_stationary > 0.0) {
        return Err(Error::InvalidArgument("invalid solver configuration".into()));
    }
    penalty.check_compatible(series.len())?;

    let y = series.y_f64();
    let n = series.n_f64();
    let ell = lipschitz_bound(series);
    let step_l = match cfg.step_l {
        None => ell,
        Some(l) if l >= ell && l > 0.0 => l,
        Some(l) => {
            return Err(Error::InvalidArgument(format!(
                "step_l {l} is below the curvature bound {ell}"
            )))
        }
    };
    let lambda_prime = lambda / step_l;

    let mut prox = match penalty.kind {
        PenaltyKind::FusedL1 if penalty.is_equispaced() => Prox::L1Uniform,
        PenaltyKind::FusedL1 => Prox::L1Weighted(penalty.weights()),
        PenaltyKind::FusedL0 => Prox::L0,
        PenaltyKind::TrendL1 => {
            cfg.admm.validate()?;
            Prox::Trend(Box::new(AdmmSolver::new(penalty.difference_operator()?, cfg.admm.rho)?))
        }
    };
    let inexact = matches!(prox, Prox::Trend(_));

    let (p_bar, _) = global_proportion(series);
    let mut theta = vec![logit_clamped(p_bar)?; series.len()];
    let mut phi = objective(series, &theta, penalty, lambda)?;

    let mut obj_trace = cfg.record_trace.then(|| vec![phi]);
    let mut step_trace = cfg.record_trace.then(Vec::new);
    let mut diagnostics = FitDiagnostics {
        final_step_l: step_l,
        lipschitz_l: ell,
        ..FitDiagnostics::default()
    };

    let mut grad = vec![0.0; theta.len()];
    let mut u_bar = vec![0.0; theta.len()];
    let mut converged = false;
    let mut iterations = 0;
    let mut admm_cfg = cfg.admm;

    while iterations < cfg.max_iter {
        nll_grad_raw(&y, &n, &theta, &mut grad);
        for ((u, &t), &g) in u_bar.iter_mut().zip(&theta).zip(&grad) {
            *u = t - g / step_l;
        }
        if u_bar.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverDiverged { iteration: iterations + 1 });
        }

        let mut attempt = 0;
        let (next, next_phi) = loop {
            let mut next = match &mut prox {
                Prox::L1Uniform => prox_fused_l1(&u_bar, lambda_prime)?,
                Prox::L1Weighted(w) => prox_fused_l1_weighted(&u_bar, lambda_prime, w)?,
                Prox::L0 => prox_fused_l0_boxed(&u_bar, lambda_prime, -THETA_CLAMP, THETA_CLAMP)?,
                Prox::Trend(solver) => {
                    let out = solver.solve(&u_bar, lambda_prime, &admm_cfg)?;
                    diagnostics.admm_iterations.push(out.iterations);
                    out.u
                }
            };
            // For the ℓ1 penalties clamping after the prox is the prox of the
            // penalty plus the box; the ℓ0 prox already works inside the box.
            for v in next.iter_mut() {
                *v = v.clamp(-THETA_CLAMP, THETA_CLAMP);
            }
            let next_phi = objective(series, &next, penalty, lambda)?;
            if !next_phi.is_finite() {
                return Err(Error::SolverDiverged { iteration: iterations + 1 });
            }
            if inexact && next_phi > phi + MONOTONE_SLACK && attempt < 2 {
                attempt += 1;
                admm_cfg.tol_primal *= 1e-2;
                admm_cfg.tol_dual *= 1e-2;
                continue;
            }
            break (next, next_phi);
        };

        if next_phi > phi + MONOTONE_SLACK && inexact {
            // The prox is no longer accurate enough to make progress.
            diagnostics.stalled = true;
            converged = true;
            break;
        }

        let step: f64 = next.iter().zip(&theta).map(|(a, b)| (a - b) * (a - b)).sum();
        theta = next;
        phi = next_phi;
        iterations += 1;
        if let Some(t) = obj_trace.as_mut() {
            t.push(phi);
        }
        if let Some(s) = step_trace.as_mut() {
            s.push(step);
        }
        if step <= cfg.eps_stationary {
            converged = true;
            break;
        }
    }

    diagnostics.mu_min_final = mu_min_at(series, &theta)?;
    diagnostics.linear_rate_gamma = linear_rate_gamma(diagnostics.mu_min_final, step_l);

    let mut fit = SegmentedFit::from_theta(theta, FitKind::Penalized(penalty.clone()), lambda);
    fit.objective_trace = obj_trace;
    fit.step_trace = step_trace;
    fit.iterations = iterations;
    fit.converged = converged;
    fit.diagnostics = diagnostics;
    Ok(fit)
}

/// Trend filtering: piecewise-linear `θ` via the spacing-weighted
/// second-difference penalty.
pub fn fit_trend_filter(series: &StreamSeries, lambda: f64, cfg: &SolverConfig) -> Result<SegmentedFit> {
    if series.len() < 3 {
        return Err(Error::SeriesTooShort {
            needed: 3,
            actual: series.len(),
        });
    }
    let penalty = PenaltySpec::for_series(PenaltyKind::TrendL1, series);
    fit_segmentation(series, &penalty, lambda, cfg)
}

/// Gaps where the fitted proportion changes by more than `jump_tol`.
pub fn extract_jumps(fit: &SegmentedFit, jump_tol: f64) -> Vec<JumpLocation> {
    fit.p_hat
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[1] - w[0]).abs() > jump_tol)
        .map(|(index, w)| JumpLocation {
            index,
            left_level: w[0],
            right_level: w[1],
            magnitude: w[1] - w[0],
        })
        .collect()
}

/// Bound relating the smallest observed step to the objective decrease.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityBound {
    pub min_step: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub converged: bool,
    /// Largest single-step objective increase (≤ 0 when monotone).
    pub max_increase: f64,
    pub monotone: bool,
    pub stationarity: StationarityBound,
    pub linear_rate_gamma: f64,
}

/// Checks the recorded trace of a fit.
///
/// Monotonicity allows [`MONOTONE_SLACK`]. The stationarity bound is
/// `min_k ‖θ_{k+1} − θ_k‖² ≤ 2(φ(θ_0) − φ*) / (K (L − ℓ))` with `φ*` taken as
/// the smallest recorded objective and `L = L_step (1 + 1e-6)` so that the
/// denominator stays positive when `L_step = ℓ`.
pub fn convergence_report(fit: &SegmentedFit) -> Result<ConvergenceReport> {
    let (Some(trace), Some(steps)) = (&fit.objective_trace, &fit.step_trace) else {
        return Err(Error::NoTrace);
    };
    if trace.is_empty() {
        return Err(Error::NoTrace);
    }
    let max_increase = trace
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let max_increase = if max_increase == f64::NEG_INFINITY { 0.0 } else { max_increase };

    let phi_star = trace.iter().copied().fold(f64::INFINITY, f64::min);
    let k = steps.len();
    let min_step = steps.iter().copied().fold(f64::INFINITY, f64::min);
    let ell = fit.diagnostics.lipschitz_l;
    let big_l = fit.diagnostics.final_step_l * (1.0 + 1e-6);
    let stationarity = if k == 0 {
        StationarityBound {
            min_step: 0.0,
            bound: f64::INFINITY,
            holds: true,
        }
    } else {
        let bound = 2.0 * (trace[0] - phi_star) / (k as f64 * (big_l - ell));
        StationarityBound {
            min_step,
            bound,
            holds: min_step <= bound,
        }
    };
    Ok(ConvergenceReport {
        iterations: fit.iterations,
        converged: fit.converged,
        max_increase,
        monotone: max_increase <= MONOTONE_SLACK,
        stationarity,
        linear_rate_gamma: fit.diagnostics.linear_rate_gamma,
    })
}
