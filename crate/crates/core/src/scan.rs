//! Windowed scan statistic with a permutation null.
//!
//! For each retained point `t` the window `N(Δ; t)` holds the points within
//! `Δ` positions of `t`. The standardized excess of the window over the pooled
//! proportion is
//!
//! ```text
//! T_t = (p̂_t^ave − p̂_H0) / σ̂_t,   σ̂_t = sqrt(p̂_H0 (1 − p̂_H0) / Σ_{j∈N(Δ;t)} n_j)
//! ```
//!
//! and the test statistic is `𝒯 = max_t T_t`. Under the null every document
//! is equally likely to carry the tag, so replicates reallocate the pooled
//! successes across days with the daily totals held fixed.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sampling::{multivariate_hypergeometric, replicate_seed, rng_for};
use crate::stream::StreamSeries;

pub const DEFAULT_DELTA: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ScanTestResult {
    pub statistic_t: f64,
    pub profile: Vec<f64>,
    pub argmax_t: usize,
    pub p_value: f64,
    pub n_permutations: usize,
    pub seed: u64,
}

fn window(len: usize, i: usize, delta: usize) -> (usize, usize) {
    (i.saturating_sub(delta), (i + delta).min(len - 1))
}

/// `Σ y_j / Σ n_j` over the points within `delta` positions of `i`.
pub fn neighborhood_average(series: &StreamSeries, i: usize, delta: usize) -> Result<f64> {
    if i >= series.len() {
        return Err(Error::InvalidArgument(format!(
            "index {i} outside a series of length {}",
            series.len()
        )));
    }
    let (lo, hi) = window(series.len(), i, delta);
    let pts = &series.points()[lo..=hi];
    let y: u64 = pts.iter().map(|p| p.y).sum();
    let n: u64 = pts.iter().map(|p| p.n).sum();
    Ok(y as f64 / n as f64)
}

/// Profile `T_t` and its maximum from raw counts; `p_null` is the pooled rate.
fn profile_from_counts(y: &[u64], n: &[u64], delta: usize, p_null: f64) -> (f64, Vec<f64>, usize) {
    let len = y.len();
    let mut cy = vec![0u64; len + 1];
    let mut cn = vec![0u64; len + 1];
    for t in 0..len {
        cy[t + 1] = cy[t] + y[t];
        cn[t + 1] = cn[t] + n[t];
    }
    let var_num = p_null * (1.0 - p_null);
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    let profile: Vec<f64> = (0..len)
        .map(|t| {
            let (lo, hi) = window(len, t, delta);
            let wy = (cy[hi + 1] - cy[lo]) as f64;
            let wn = (cn[hi + 1] - cn[lo]) as f64;
            let v = (wy / wn - p_null) / (var_num / wn).sqrt();
            if v > best {
                best = v;
                arg = t;
            }
            v
        })
        .collect();
    (best, profile, arg)
}

fn pooled_null(series: &StreamSeries) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let p = series.total_y() as f64 / series.total_n() as f64;
    if p <= 0.0 || p >= 1.0 {
        return Err(Error::DegenerateNull(p));
    }
    Ok(p)
}

/// Returns `(𝒯, profile, argmax)`; ties go to the earliest point.
pub fn scan_statistic(series: &StreamSeries, delta: usize) -> Result<(f64, Vec<f64>, usize)> {
    let p = pooled_null(series)?;
    Ok(profile_from_counts(&series.y(), &series.n(), delta, p))
}

/// Scan statistic with its permutation p-value over `b` replicates.
pub fn permutation_pvalue(series: &StreamSeries, delta: usize, b: usize, seed: u64) -> Result<ScanTestResult> {
    if b == 0 {
        return Err(Error::InvalidArgument("need at least one permutation".into()));
    }
    let p = pooled_null(series)?;
    let n = series.n();
    let (observed, profile, argmax_t) = profile_from_counts(&series.y(), &n, delta, p);
    let total = series.total_y();
    // Pooled successes and totals are unchanged by reallocation, so p̂_H0 is too.
    let exceed = (0..b)
        .into_par_iter()
        .filter(|&r| {
            let mut rng = rng_for(replicate_seed(seed, r));
            let y = multivariate_hypergeometric(&mut rng, total, &n);
            profile_from_counts(&y, &n, delta, p).0 >= observed
        })
        .count();
    Ok(ScanTestResult {
        statistic_t: observed,
        profile,
        argmax_t,
        p_value: (1 + exceed) as f64 / (b + 1) as f64,
        n_permutations: b,
        seed,
    })
}

/// Screening of many streams against a list of significance levels.
#[derive(Debug)]
pub struct ScreenReport {
    /// `(threshold, number of streams with p ≤ threshold)` in input order.
    pub survivors: Vec<(f64, usize)>,
    /// `(tag, result)` sorted by ascending p, ties by tag.
    pub results: Vec<(String, ScanTestResult)>,
    /// `(tag, error)` for streams that could not be tested.
    pub errors: Vec<(String, Error)>,
}

pub fn batch_screen(
    streams: &BTreeMap<String, StreamSeries>,
    delta: usize,
    b: usize,
    seed: u64,
    thresholds: &[f64],
) -> Result<ScreenReport> {
    if streams.is_empty() {
        return Err(Error::InvalidArgument("no streams to screen".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidArgument(format!("threshold {t} outside [0, 1]")));
    }
    let mut results = Vec::new();
    let mut errors = Vec::new();
    for (tag, series) in streams {
        match permutation_pvalue(series, delta, b, seed) {
            Ok(r) => results.push((tag.clone(), r)),
            Err(e) => errors.push((tag.clone(), e)),
        }
    }
    results.sort_by(|a, b| a.1.p_value.total_cmp(&b.1.p_value).then_with(|| a.0.cmp(&b.0)));
    let survivors = thresholds
        .iter()
        .map(|&t| (t, results.iter().filter(|r| r.1.p_value <= t).count()))
        .collect();
    Ok(ScreenReport {
        survivors,
        results,
        errors,
    })
}
