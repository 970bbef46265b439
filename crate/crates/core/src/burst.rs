//! Bursts: intervals where the fitted proportion sits above a baseline.
//!
//! The baseline is one binomial standard error above the stream's global
//! proportion at its mean daily volume. A burst's strength is the log
//! likelihood ratio of the fitted signal against the baseline over the burst.

use std::cmp::Ordering;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::likelihood::{binomial_loglik, clamp_proportion};
use crate::segment::SegmentedFit;
use crate::stream::{global_proportion, StreamSeries};

/// Estimate of the typical proportion that the baseline is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselinePolicy {
    /// `Σ y / Σ n`.
    #[default]
    Mean,
    /// Median of the daily proportions.
    Median,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurstRecord {
    pub tag: String,
    /// Inclusive.
    pub start: NaiveDate,
    /// Inclusive.
    pub end: NaiveDate,
    pub peak: NaiveDate,
    pub strength: f64,
    pub baseline_p0: f64,
    /// Point range `[start, end)` in the stream's indexing.
    pub interval: (usize, usize),
}

/// `p̄ + sqrt(p̄ (1 − p̄) / n̄)` with the mean proportion.
pub fn baseline(series: &StreamSeries) -> Result<f64> {
    baseline_with(series, BaselinePolicy::Mean)
}

pub fn baseline_with(series: &StreamSeries, policy: BaselinePolicy) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let (mean, n_bar) = global_proportion(series);
    let p = match policy {
        BaselinePolicy::Mean => mean,
        BaselinePolicy::Median => {
            let mut props = series.raw_proportions();
            props.sort_by(f64::total_cmp);
            let m = props.len();
            if m % 2 == 1 {
                props[m / 2]
            } else {
                0.5 * (props[m / 2 - 1] + props[m / 2])
            }
        }
    };
    if p <= 0.0 || p >= 1.0 {
        return Err(Error::DegenerateBaseline(p));
    }
    Ok(p + (p * (1.0 - p) / n_bar).sqrt())
}

/// Maximal point ranges `[start, end)` with `p̂_t > p0` throughout.
pub fn extract_bursts(fit: &SegmentedFit, p0: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &p) in fit.p_hat.iter().enumerate() {
        match (p > p0, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push((s, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, fit.len()));
    }
    out
}

/// `S(T) = Σ_{t∈T} [ℓ(p̂_t) − ℓ(p0)]` with binomial log-likelihood kernels.
pub fn burst_strength(series: &StreamSeries, fit: &SegmentedFit, interval: (usize, usize), p0: f64) -> Result<f64> {
    let (a, b) = interval;
    if a >= b || b > series.len() || fit.len() != series.len() {
        return Err(Error::InvalidArgument(format!("interval {a}..{b} does not fit the series")));
    }
    let q0 = clamp_proportion(p0);
    let s = series.points()[a..b]
        .iter()
        .zip(&fit.p_hat[a..b])
        .map(|(pt, &p)| {
            let (y, n) = (pt.y as f64, pt.n as f64);
            binomial_loglik(y, n, clamp_proportion(p)) - binomial_loglik(y, n, q0)
        })
        .sum();
    Ok(s)
}

/// Date of the largest raw proportion in `[a, b)`, earliest on ties.
fn peak_date(series: &StreamSeries, (a, b): (usize, usize)) -> NaiveDate {
    let pts = &series.points()[a..b];
    let mut best = &pts[0];
    for p in &pts[1..] {
        if p.proportion() > best.proportion() {
            best = p;
        }
    }
    best.date
}

/// Bursts of one stream, unsorted.
pub fn stream_bursts(series: &StreamSeries, fit: &SegmentedFit, p0: f64) -> Result<Vec<BurstRecord>> {
    let pts = series.points();
    extract_bursts(fit, p0)
        .into_iter()
        .map(|iv| {
            Ok(BurstRecord {
                tag: series.tag().to_string(),
                start: pts[iv.0].date,
                end: pts[iv.1 - 1].date,
                peak: peak_date(series, iv),
                strength: burst_strength(series, fit, iv, p0)?,
                baseline_p0: p0,
                interval: iv,
            })
        })
        .collect()
}

fn rank_order(a: &BurstRecord, b: &BurstRecord) -> Ordering {
    b.strength
        .total_cmp(&a.strength)
        .then_with(|| a.tag.cmp(&b.tag))
        .then_with(|| a.start.cmp(&b.start))
}

/// All bursts across streams, strongest first; equal strengths order by
/// `(tag, start)`.
pub fn rank_bursts<'a>(
    streams: impl IntoIterator<Item = (&'a StreamSeries, &'a SegmentedFit)>,
    policy: BaselinePolicy,
) -> Result<Vec<BurstRecord>> {
    let mut all = Vec::new();
    for (series, fit) in streams {
        let p0 = baseline_with(series, policy)?;
        all.extend(stream_bursts(series, fit, p0)?);
    }
    all.sort_by(rank_order);
    Ok(all)
}
