//! Choice of `λ` by k-fold cross-validation.
//!
//! Fold `f` holds every point `t` with `t mod k = f`. Each fold is fitted
//! without its points, and a held-out point is predicted on the `θ` scale
//! from its nearest retained neighbours.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::likelihood::{nll_raw, THETA_CLAMP};
use crate::prox::{PenaltyKind, PenaltySpec};
use crate::segment::{extract_jumps, fit_segmentation, SegmentedFit, SolverConfig, DEFAULT_JUMP_TOL};
use crate::stream::StreamSeries;

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_GRID_SIZE: usize = 50;
/// Ratio between the top and the bottom of the default grid.
pub const GRID_SPAN: f64 = 1e4;
const MAX_DOUBLINGS: usize = 80;

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Descending.
    pub lambda_grid: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub lambda_cv: f64,
    pub lambda_1se: f64,
    pub folds: usize,
}

impl CvResult {
    pub fn index_of(&self, lambda: f64) -> Option<usize> {
        self.lambda_grid.iter().position(|&l| l == lambda)
    }
}

pub fn assign_folds(n: usize, k: usize) -> Result<Vec<usize>> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!("need 2 <= k <= {n}, got k = {k}")));
    }
    Ok((0..n).map(|t| t % k).collect())
}

/// Mean negative log-likelihood of the held-out points under predictions
/// interpolated from a fit on the remaining points.
///
/// `heldout` must be sorted ascending; `train_fit` is indexed by the retained
/// points in order.
pub fn cv_heldout_loss(series: &StreamSeries, train_fit: &SegmentedFit, heldout: &[usize]) -> Result<f64> {
    let len = series.len();
    if heldout.is_empty() {
        return Err(Error::InvalidArgument("no held-out points".into()));
    }
    if heldout.windows(2).any(|w| w[0] >= w[1]) || heldout[heldout.len() - 1] >= len {
        return Err(Error::InvalidArgument("held-out indices must be sorted and in range".into()));
    }
    if heldout.len() + train_fit.len() != len {
        return Err(Error::LengthMismatch {
            expected: len - heldout.len(),
            actual: train_fit.len(),
        });
    }
    if train_fit.is_empty() {
        return Err(Error::EmptySeries);
    }

    // Full-series θ with NaN at held-out positions.
    let mut full = vec![f64::NAN; len];
    let mut next_held = heldout.iter().peekable();
    let mut r = 0;
    for (t, slot) in full.iter_mut().enumerate() {
        if next_held.peek() == Some(&&t) {
            next_held.next();
        } else {
            *slot = train_fit.theta_hat[r];
            r += 1;
        }
    }
    let mut left = vec![f64::NAN; len];
    let mut last = f64::NAN;
    for t in 0..len {
        left[t] = last;
        if !full[t].is_nan() {
            last = full[t];
        }
    }
    let mut right = vec![f64::NAN; len];
    last = f64::NAN;
    for t in (0..len).rev() {
        right[t] = last;
        if !full[t].is_nan() {
            last = full[t];
        }
    }

    let pts = series.points();
    let (mut y, mut n, mut theta) = (Vec::new(), Vec::new(), Vec::new());
    for &t in heldout {
        let pred = match (left[t].is_nan(), right[t].is_nan()) {
            (false, false) => 0.5 * (left[t] + right[t]),
            (false, true) => left[t],
            (true, false) => right[t],
            (true, true) => unreachable!("at least one retained point"),
        };
        y.push(pts[t].y as f64);
        n.push(pts[t].n as f64);
        theta.push(pred.clamp(-THETA_CLAMP, THETA_CLAMP));
    }
    Ok(nll_raw(&y, &n, &theta) / heldout.len() as f64)
}

fn fit_kind(series: &StreamSeries, kind: PenaltyKind, lambda: f64, cfg: &SolverConfig) -> Result<SegmentedFit> {
    fit_segmentation(series, &PenaltySpec::for_series(kind, series), lambda, cfg)
}

fn is_constant(fit: &SegmentedFit) -> bool {
    extract_jumps(fit, DEFAULT_JUMP_TOL).is_empty()
}

/// Smallest power-of-two multiple of 1 giving a constant fit, found by
/// doubling (or halving while 1 already gives a constant fit).
pub fn constant_fit_threshold(series: &StreamSeries, kind: PenaltyKind, cfg: &SolverConfig) -> Result<f64> {
    let cfg = SolverConfig {
        record_trace: false,
        ..cfg.clone()
    };
    let mut lambda = 1.0;
    if is_constant(&fit_kind(series, kind, lambda, &cfg)?) {
        for _ in 0..MAX_DOUBLINGS {
            let smaller = lambda / 2.0;
            if !is_constant(&fit_kind(series, kind, smaller, &cfg)?) {
                return Ok(lambda);
            }
            lambda = smaller;
        }
        return Ok(lambda);
    }
    for _ in 0..MAX_DOUBLINGS {
        lambda *= 2.0;
        if is_constant(&fit_kind(series, kind, lambda, &cfg)?) {
            return Ok(lambda);
        }
    }
    Err(Error::InvalidArgument("no lambda gives a constant fit".into()))
}

/// `size` log-spaced values from `top` down to `top / GRID_SPAN`.
pub fn log_grid(top: f64, size: usize) -> Result<Vec<f64>> {
    if !(top > 0.0) || !top.is_finite() || size == 0 {
        return Err(Error::InvalidArgument(format!("invalid grid top {top} or size {size}")));
    }
    if size == 1 {
        return Ok(vec![top]);
    }
    let step = GRID_SPAN.ln() / (size - 1) as f64;
    Ok((0..size).map(|i| top * (-(i as f64) * step).exp()).collect())
}

pub fn default_grid(series: &StreamSeries, kind: PenaltyKind, size: usize, cfg: &SolverConfig) -> Result<Vec<f64>> {
    log_grid(constant_fit_threshold(series, kind, cfg)?, size)
}

pub fn cross_validate(
    series: &StreamSeries,
    kind: PenaltyKind,
    lambda_grid: &[f64],
    k: usize,
    cfg: &SolverConfig,
) -> Result<CvResult> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    if lambda_grid.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument("lambda grid must be positive".into()));
    }
    if lambda_grid.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidArgument("lambda grid must be strictly descending".into()));
    }
    let folds = assign_folds(series.len(), k)?;
    let cfg = SolverConfig {
        record_trace: false,
        ..cfg.clone()
    };

    let splits: Vec<(Vec<usize>, StreamSeries)> = (0..k)
        .map(|f| {
            let (held, train): (Vec<usize>, Vec<usize>) = (0..series.len()).partition(|&t| folds[t] == f);
            Ok((held, series.select(&train)?))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..lambda_grid.len()).flat_map(|l| (0..k).map(move |f| (l, f))).collect();
    let losses: Vec<f64> = jobs
        .par_iter()
        .map(|&(l, f)| {
            let lambda = lambda_grid[l];
            let (held, train) = &splits[f];
            fit_kind(train, kind, lambda, &cfg)
                .and_then(|fit| cv_heldout_loss(series, &fit, held))
                .map_err(|e| Error::CrossValidation {
                    fold: f,
                    lambda,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;

    let mut cv_mean = Vec::with_capacity(lambda_grid.len());
    let mut cv_se = Vec::with_capacity(lambda_grid.len());
    for row in losses.chunks(k) {
        let mean = row.iter().sum::<f64>() / k as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
        cv_mean.push(mean);
        cv_se.push((var / k as f64).sqrt());
    }

    // First minimum in grid order, i.e. the largest λ among exact ties.
    let best = (0..cv_mean.len()).fold(0, |b, i| if cv_mean[i] < cv_mean[b] { i } else { b });
    let limit = cv_mean[best] + cv_se[best];
    let one_se = (0..=best).find(|&i| cv_mean[i] <= limit).unwrap_or(best);

    Ok(CvResult {
        lambda_grid: lambda_grid.to_vec(),
        lambda_cv: lambda_grid[best],
        lambda_1se: lambda_grid[one_se],
        cv_mean,
        cv_se,
        folds: k,
    })
}

/// Cross-validates over the default grid, then fits the full series at
/// `λ_cv` (or `λ_1se`).
pub fn fit_cross_validated(
    series: &StreamSeries,
    kind: PenaltyKind,
    folds: usize,
    grid_size: usize,
    one_se: bool,
    cfg: &SolverConfig,
) -> Result<(CvResult, SegmentedFit)> {
    let grid = default_grid(series, kind, grid_size, cfg)?;
    let cv = cross_validate(series, kind, &grid, folds, cfg)?;
    let lambda = if one_se { cv.lambda_1se } else { cv.lambda_cv };
    let fit = fit_kind(series, kind, lambda, cfg)?;
    Ok((cv, fit))
}
