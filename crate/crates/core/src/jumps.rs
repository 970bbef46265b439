//! p-values for fitted jumps by sample splitting.
//!
//! Every document is sent to the train or the test half with probability ½.
//! Jumps are located on the train half and scored on the test half with a
//! two-window likelihood ratio statistic, whose null distribution comes from
//! reallocating successes inside windows placed in stretches where the train
//! fit is flat.

use chrono::NaiveDate;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::likelihood::{binomial_loglik, logit_clamped};
use crate::prox::{PenaltyKind, PenaltySpec};
use crate::sampling::{
    binomial_inverse_cdf, derive_seed, hypergeometric, multivariate_hypergeometric, replicate_seed, rng_for,
};
use crate::scan::DEFAULT_DELTA;
use crate::segment::{extract_jumps, fit_segmentation, FitKind, JumpLocation, SegmentedFit, SolverConfig, DEFAULT_JUMP_TOL};
use crate::select::{cross_validate, default_grid, DEFAULT_FOLDS, DEFAULT_GRID_SIZE};
use crate::stream::StreamSeries;

/// Sub-stream of the run seed used by the permutation null.
const NULL_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: StreamSeries,
    pub test: StreamSeries,
    pub seed: u64,
}

/// A jump located on the train half and scored on the test half.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    /// Gap in the train half's indexing.
    pub location: JumpLocation,
    /// Last train date before the gap.
    pub left_date: NaiveDate,
    /// First train date after the gap.
    pub right_date: NaiveDate,
    pub lrt_stat: f64,
    pub p_value: f64,
    pub null_sample_size: usize,
}

/// Sends each document to the train half with probability ½.
///
/// Fails with [`Error::EmptySeries`] only if a half receives no documents.
pub fn split_sample(series: &StreamSeries, seed: u64) -> Result<SplitPair> {
    let mut rng = rng_for(seed);
    let mut train = (Vec::new(), Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new(), Vec::new());
    for p in series.points() {
        let n_train = binomial_inverse_cdf(&mut rng, p.n, 0.5);
        let y_train = hypergeometric(&mut rng, p.n, p.y, n_train);
        for (half, y, n) in [(&mut train, y_train, n_train), (&mut test, p.y - y_train, p.n - n_train)] {
            if n > 0 {
                half.0.push(p.date);
                half.1.push(y);
                half.2.push(n);
            }
        }
    }
    Ok(SplitPair {
        train: StreamSeries::new(series.tag(), &train.0, &train.1, &train.2)?,
        test: StreamSeries::new(series.tag(), &test.0, &test.1, &test.2)?,
        seed,
    })
}

/// `2 (ℓℓ_L + ℓℓ_R − ℓℓ_pooled)` for two aggregated binomial samples.
pub fn two_sample_lrt(y_left: u64, n_left: u64, y_right: u64, n_right: u64) -> f64 {
    let (yl, nl, yr, nr) = (y_left as f64, n_left as f64, y_right as f64, n_right as f64);
    let pooled = (yl + yr) / (nl + nr);
    let ll = binomial_loglik(yl, nl, yl / nl) + binomial_loglik(yr, nr, yr / nr)
        - binomial_loglik(yl + yr, nl + nr, pooled);
    (2.0 * ll).max(0.0)
}

fn window_totals(series: &StreamSeries, range: std::ops::Range<usize>) -> (u64, u64) {
    series.points()[range]
        .iter()
        .fold((0, 0), |(y, n), p| (y + p.y, n + p.n))
}

/// LRT between the `delta` points ending at `gap` and the `delta` points
/// starting at `gap + 1` (clipped at the ends of the series).
pub fn jump_lrt(series: &StreamSeries, gap: usize, delta: usize) -> Result<f64> {
    if delta == 0 || gap + 1 >= series.len() {
        return Err(Error::EmptyWindow { gap });
    }
    let (yl, nl) = window_totals(series, (gap + 1).saturating_sub(delta)..gap + 1);
    let (yr, nr) = window_totals(series, gap + 1..(gap + 1 + delta).min(series.len()));
    Ok(two_sample_lrt(yl, nl, yr, nr))
}

/// LRT at a calendar gap: the last `delta` points dated `<= left` against the
/// first `delta` points dated `>= right`.
pub fn jump_lrt_at_dates(series: &StreamSeries, left: NaiveDate, right: NaiveDate, delta: usize, gap: usize) -> Result<f64> {
    let pts = series.points();
    let left_end = pts.partition_point(|p| p.date <= left);
    let right_start = pts.partition_point(|p| p.date < right);
    if delta == 0 || left_end == 0 || right_start >= pts.len() {
        return Err(Error::EmptyWindow { gap });
    }
    let (yl, nl) = window_totals(series, left_end.saturating_sub(delta)..left_end);
    let (yr, nr) = window_totals(series, right_start..(right_start + delta).min(pts.len()));
    Ok(two_sample_lrt(yl, nl, yr, nr))
}

/// Maximal runs `[start, end)` of constant fitted signal, split at the fit's
/// jumps, with at least `2 delta + 1` points.
pub fn quiet_stretches(fit: &SegmentedFit, delta: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    let cuts = extract_jumps(fit, DEFAULT_JUMP_TOL).into_iter().map(|j| j.index + 1);
    for end in cuts.chain(std::iter::once(fit.len())) {
        if end - start > 2 * delta {
            out.push((start, end));
        }
        start = end;
    }
    out
}

/// Sorted null sample of the jump statistic.
///
/// Each replicate draws a window of `2 delta` consecutive points uniformly
/// among all placements inside `stretches` (ranges of `series`), reallocates
/// the window's successes over its days with totals fixed, and scores the
/// window's midpoint.
pub fn jump_null_distribution(
    series: &StreamSeries,
    stretches: &[(usize, usize)],
    delta: usize,
    b: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if b == 0 {
        return Err(Error::InvalidArgument("need at least one null replicate".into()));
    }
    let width = 2 * delta;
    if delta == 0 {
        return Err(Error::NoNullPlacement { window: width });
    }
    // placement starts, in stretch order
    let starts: Vec<usize> = stretches
        .iter()
        .filter(|&&(a, e)| e <= series.len() && e >= a + width)
        .flat_map(|&(a, e)| a..=e - width)
        .collect();
    if starts.is_empty() {
        return Err(Error::NoNullPlacement { window: width });
    }
    let pts = series.points();
    let mut null: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(replicate_seed(seed, r));
            let s = starts[rng.random_range(0..starts.len())];
            let window = &pts[s..s + width];
            let caps: Vec<u64> = window.iter().map(|p| p.n).collect();
            let total = window.iter().map(|p| p.y).sum();
            let y = multivariate_hypergeometric(&mut rng, total, &caps);
            let (yl, yr) = (y[..delta].iter().sum(), y[delta..].iter().sum());
            let (nl, nr) = (caps[..delta].iter().sum(), caps[delta..].iter().sum());
            two_sample_lrt(yl, nl, yr, nr)
        })
        .collect();
    null.sort_by(f64::total_cmp);
    Ok(null)
}

/// `(1 + #{null >= observed}) / (B + 1)` against a sorted null sample.
pub fn upper_tail_pvalue(sorted_null: &[f64], observed: f64) -> f64 {
    let below = sorted_null.partition_point(|&v| v < observed);
    (1 + sorted_null.len() - below) as f64 / (sorted_null.len() + 1) as f64
}

/// Maps train-half index ranges to the test-half points dated inside them.
fn stretches_on(test: &StreamSeries, train: &StreamSeries, stretches: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let tp = test.points();
    let dates = train.points();
    stretches
        .iter()
        .map(|&(a, e)| {
            let (first, last) = (dates[a].date, dates[e - 1].date);
            (tp.partition_point(|p| p.date < first), tp.partition_point(|p| p.date <= last))
        })
        .collect()
}

/// Jump records plus the jumps that could not be scored.
#[derive(Debug)]
pub struct JumpScores {
    /// Sorted by ascending p, ties by descending `|magnitude|`.
    pub records: Vec<JumpRecord>,
    pub errors: Vec<(JumpLocation, Error)>,
}

/// Scores the jumps of `train_fit` (a fit of `split.train`) on `split.test`,
/// against one null sample built from the fit's quiet stretches.
pub fn jump_pvalues(split: &SplitPair, train_fit: &SegmentedFit, delta: usize, b: usize, seed: u64) -> Result<JumpScores> {
    if train_fit.len() != split.train.len() {
        return Err(Error::LengthMismatch {
            expected: split.train.len(),
            actual: train_fit.len(),
        });
    }
    let jumps = extract_jumps(train_fit, DEFAULT_JUMP_TOL);
    if jumps.is_empty() {
        return Ok(JumpScores {
            records: Vec::new(),
            errors: Vec::new(),
        });
    }
    let stretches = stretches_on(&split.test, &split.train, &quiet_stretches(train_fit, delta));
    let null = jump_null_distribution(&split.test, &stretches, delta, b, seed)?;

    let train_pts = split.train.points();
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for j in jumps {
        let (left, right) = (train_pts[j.index].date, train_pts[j.index + 1].date);
        match jump_lrt_at_dates(&split.test, left, right, delta, j.index) {
            Ok(stat) => records.push(JumpRecord {
                location: j,
                left_date: left,
                right_date: right,
                lrt_stat: stat,
                p_value: upper_tail_pvalue(&null, stat),
                null_sample_size: null.len(),
            }),
            Err(e) => errors.push((j, e)),
        }
    }
    records.sort_by(|a, b| {
        a.p_value
            .total_cmp(&b.p_value)
            .then_with(|| b.location.magnitude.abs().total_cmp(&a.location.magnitude.abs()))
    });
    Ok(JumpScores { records, errors })
}

/// Piecewise-constant MLE of `series` with breaks after the given gaps.
pub fn refit_at_gaps(series: &StreamSeries, gaps: &[usize], alpha: f64) -> Result<SegmentedFit> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut cuts: Vec<usize> = gaps.iter().map(|&g| g + 1).collect();
    cuts.sort_unstable();
    cuts.dedup();
    if cuts.last().is_some_and(|&c| c >= series.len()) {
        return Err(Error::InvalidArgument("gap outside the series".into()));
    }
    cuts.push(series.len());
    let mut theta = Vec::with_capacity(series.len());
    let mut start = 0;
    for end in cuts {
        let (y, n) = window_totals(series, start..end);
        let level = logit_clamped(y as f64 / n as f64)?;
        theta.extend(std::iter::repeat_n(level, end - start));
        start = end;
    }
    Ok(SegmentedFit::from_theta(theta, FitKind::Pruned { alpha }, 0.0))
}

/// Drops the jumps with `p > alpha` and refits `series` by segment MLE
/// between the survivors. Gaps are placed by date, so `series` may be the
/// full stream or either half.
pub fn prune_and_refit(series: &StreamSeries, records: &[JumpRecord], alpha: f64) -> Result<SegmentedFit> {
    let pts = series.points();
    let gaps: Vec<usize> = records
        .iter()
        .filter(|r| r.p_value <= alpha)
        .filter_map(|r| {
            let left_end = pts.partition_point(|p| p.date <= r.left_date);
            (left_end > 0 && left_end < pts.len()).then(|| left_end - 1)
        })
        .collect();
    refit_at_gaps(series, &gaps, alpha)
}

/// How the train-half fit chooses `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    CrossValidated { folds: usize, grid_size: usize, one_se: bool },
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::CrossValidated {
            folds: DEFAULT_FOLDS,
            grid_size: DEFAULT_GRID_SIZE,
            one_se: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JumpConfig {
    pub penalty: PenaltyKind,
    pub lambda: LambdaChoice,
    pub delta: usize,
    pub permutations: usize,
    pub seed: u64,
    /// Prune at this level when set.
    pub alpha: Option<f64>,
    pub solver: SolverConfig,
}

impl Default for JumpConfig {
    fn default() -> Self {
        Self {
            penalty: PenaltyKind::FusedL0,
            lambda: LambdaChoice::default(),
            delta: DEFAULT_DELTA,
            permutations: 1000,
            seed: 0,
            alpha: None,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug)]
pub struct JumpAnalysis {
    pub split: SplitPair,
    pub lambda: f64,
    pub train_fit: SegmentedFit,
    pub scores: JumpScores,
    /// Refit of the full series at the surviving jumps.
    pub pruned: Option<SegmentedFit>,
}

/// Split, fit the train half, score on the test half, optionally prune.
pub fn analyze_jumps(series: &StreamSeries, cfg: &JumpConfig) -> Result<JumpAnalysis> {
    let split = split_sample(series, cfg.seed)?;
    let solver = SolverConfig {
        record_trace: false,
        ..cfg.solver.clone()
    };
    let lambda = match cfg.lambda {
        LambdaChoice::Fixed(l) => l,
        LambdaChoice::CrossValidated { folds, grid_size, one_se } => {
            let grid = default_grid(&split.train, cfg.penalty, grid_size, &solver)?;
            let cv = cross_validate(&split.train, cfg.penalty, &grid, folds, &solver)?;
            if one_se {
                cv.lambda_1se
            } else {
                cv.lambda_cv
            }
        }
    };
    let penalty = PenaltySpec::for_series(cfg.penalty, &split.train);
    let train_fit = fit_segmentation(&split.train, &penalty, lambda, &solver)?;
    let scores = jump_pvalues(&split, &train_fit, cfg.delta, cfg.permutations, derive_seed(cfg.seed, NULL_STREAM))?;
    let pruned = match cfg.alpha {
        Some(alpha) => Some(prune_and_refit(series, &scores.records, alpha)?),
        None => None,
    };
    Ok(JumpAnalysis {
        split,
        lambda,
        train_fit,
        scores,
        pruned,
    })
}
