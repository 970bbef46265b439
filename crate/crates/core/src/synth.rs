//! Seeded generators for synthetic binomial streams.
//!
//! A stream is a sequence of segments, each either a constant proportion or
//! an affine ramp. Specs are read from TOML:
//!
//! ```toml
//! seed = 7
//! n_per_day = 200
//!
//! [[segment]]
//! length = 200
//! p = 0.5
//!
//! [[segment]]
//! length = 653
//! intercept = 0.55
//! slope = 0.0003333333333333333
//! offset = 1          # p_j = intercept + slope * (j + offset), j from 0
//! ```

use chrono::NaiveDate;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::sampling::{binomial_inverse_cdf, rng_for};
use crate::stream::{StreamSeries, DEFAULT_START_DATE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Level {
    Constant(f64),
    /// `p_j = intercept + slope · (j + offset)` for the segment's `j`-th day.
    Ramp { intercept: f64, slope: f64, offset: f64 },
}

impl Level {
    pub fn at(&self, j: usize) -> f64 {
        match *self {
            Level::Constant(p) => p,
            Level::Ramp {
                intercept,
                slope,
                offset,
            } => intercept + slope * (j as f64 + offset),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSpec {
    pub length: usize,
    pub level: Level,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialsPerDay {
    Constant(u64),
    PerDay(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSpec {
    pub tag: String,
    pub start_date: NaiveDate,
    pub segments: Vec<SegmentSpec>,
    pub n_per_day: TrialsPerDay,
    pub seed: u64,
}

impl PiecewiseSpec {
    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True proportion for every day.
    pub fn probabilities(&self) -> Vec<f64> {
        self.segments
            .iter()
            .flat_map(|s| (0..s.length).map(move |j| s.level.at(j)))
            .collect()
    }

    pub fn trials(&self) -> Vec<u64> {
        match &self.n_per_day {
            TrialsPerDay::Constant(n) => vec![*n; self.len()],
            TrialsPerDay::PerDay(v) => v.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Spec("at least one segment is required".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.length == 0 {
                return Err(Error::Spec(format!("segment {} has zero length", i + 1)));
            }
            for j in [0, s.length - 1] {
                let p = s.level.at(j);
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Spec(format!(
                        "segment {} leaves [0, 1]: p = {p} at day {j}",
                        i + 1
                    )));
                }
            }
        }
        match &self.n_per_day {
            TrialsPerDay::Constant(0) => Err(Error::Spec("n_per_day must be positive".into())),
            TrialsPerDay::PerDay(v) if v.len() != self.len() => Err(Error::Spec(format!(
                "n_per_day has {} entries for {} days",
                v.len(),
                self.len()
            ))),
            TrialsPerDay::PerDay(v) if v.contains(&0) => {
                Err(Error::Spec("n_per_day entries must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(default)]
    tag: Option<String>,
    #[serde(default)]
    start_date: Option<String>,
    seed: u64,
    n_per_day: RawTrials,
    #[serde(rename = "segment")]
    segments: Vec<toml::Spanned<RawSegment>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTrials {
    Constant(u64),
    PerDay(Vec<u64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    length: usize,
    p: Option<f64>,
    intercept: Option<f64>,
    slope: Option<f64>,
    offset: Option<f64>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses a TOML spec. Errors carry the line they refer to.
pub fn parse_spec(text: &str) -> Result<PiecewiseSpec> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        match line {
            Some(l) => Error::Spec(format!("line {l}: {}", e.message())),
            None => Error::Spec(e.message().to_string()),
        }
    })?;
    let start_date = match raw.start_date {
        Some(s) => NaiveDate::parse_from_str(&s, "%Y-%m-%d")
            .map_err(|e| Error::Spec(format!("bad start_date {s:?}: {e}")))?,
        None => DEFAULT_START_DATE,
    };
    let mut segments = Vec::with_capacity(raw.segments.len());
    for spanned in &raw.segments {
        let line = line_of(text, spanned.span().start);
        let seg = spanned.get_ref();
        let level = match (seg.p, seg.intercept, seg.slope) {
            (Some(p), None, None) if seg.offset.is_none() => Level::Constant(p),
            (None, Some(intercept), Some(slope)) => Level::Ramp {
                intercept,
                slope,
                offset: seg.offset.unwrap_or(0.0),
            },
            _ => {
                return Err(Error::Spec(format!(
                    "line {line}: a segment needs either `p` or both `intercept` and `slope`"
                )))
            }
        };
        segments.push(SegmentSpec {
            length: seg.length,
            level,
        });
    }
    let spec = PiecewiseSpec {
        tag: raw.tag.unwrap_or_else(|| "SYN".to_string()),
        start_date,
        segments,
        n_per_day: match raw.n_per_day {
            RawTrials::Constant(n) => TrialsPerDay::Constant(n),
            RawTrials::PerDay(v) => TrialsPerDay::PerDay(v),
        },
        seed: raw.seed,
    };
    // Attach the segment's line to range errors.
    if let Err(Error::Spec(msg)) = spec.validate() {
        if let Some(rest) = msg.strip_prefix("segment ") {
            let idx: usize = rest.split_whitespace().next().and_then(|s| s.parse().ok()).unwrap_or(1);
            let line = raw
                .segments
                .get(idx.saturating_sub(1))
                .map(|s| line_of(text, s.span().start))
                .unwrap_or(1);
            return Err(Error::Spec(format!("line {line}: {msg}")));
        }
        return Err(Error::Spec(msg));
    }
    Ok(spec)
}

/// Draws one stream: `y_t ~ Bin(n_t, p_t)` independently, daily dates.
pub fn gen_stream(spec: &PiecewiseSpec) -> Result<StreamSeries> {
    spec.validate()?;
    let p = spec.probabilities();
    let n = spec.trials();
    let mut rng = rng_for(spec.seed);
    let y: Vec<u64> = p
        .iter()
        .zip(&n)
        .map(|(&pt, &nt)| binomial_inverse_cdf(&mut rng, nt, pt))
        .collect();
    StreamSeries::daily_from(spec.tag.clone(), spec.start_date, &y, &n)
}

/// Constant-proportion stream of `len` days.
pub fn gen_null_stream(len: usize, n_per_day: u64, p: f64, seed: u64) -> Result<StreamSeries> {
    gen_stream(&PiecewiseSpec {
        tag: "NULL".to_string(),
        start_date: DEFAULT_START_DATE,
        segments: vec![SegmentSpec {
            length: len,
            level: Level::Constant(p),
        }],
        n_per_day: TrialsPerDay::Constant(n_per_day),
        seed,
    })
}

/// Three levels then a ramp after a downward jump, 1203 days of 200 trials:
/// `p = 0.5` on days 1–200, `0.6` on 201–500, `0.8` on 501–550 and
/// `0.55 + (t − 550)/3000` on 551–1203.
pub fn benchmark_spec(seed: u64) -> PiecewiseSpec {
    PiecewiseSpec {
        tag: "BENCH".to_string(),
        start_date: DEFAULT_START_DATE,
        segments: vec![
            SegmentSpec {
                length: 200,
                level: Level::Constant(0.5),
            },
            SegmentSpec {
                length: 300,
                level: Level::Constant(0.6),
            },
            SegmentSpec {
                length: 50,
                level: Level::Constant(0.8),
            },
            SegmentSpec {
                length: 653,
                level: Level::Ramp {
                    intercept: 0.55,
                    slope: 1.0 / 3000.0,
                    offset: 1.0,
                },
            },
        ],
        n_per_day: TrialsPerDay::Constant(200),
        seed,
    }
}

/// [`benchmark_spec`] written as a TOML spec file.
pub fn benchmark_spec_text(seed: u64) -> String {
    format!(
        "tag = \"BENCH\"\nseed = {seed}\nn_per_day = 200\n\n\
         [[segment]]\nlength = 200\np = 0.5\n\n\
         [[segment]]\nlength = 300\np = 0.6\n\n\
         [[segment]]\nlength = 50\np = 0.8\n\n\
         [[segment]]\nlength = 653\nintercept = 0.55\nslope = {:?}\noffset = 1\n",
        1.0 / 3000.0
    )
}

/// Gap indices (0-based, between day `t` and `t + 1`) where the benchmark's
/// proportion jumps.
pub const BENCHMARK_JUMPS: [usize; 3] = [199, 499, 549];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_layout() {
        let spec = benchmark_spec(1);
        assert_eq!(spec.len(), 1203);
        let p = spec.probabilities();
        assert_eq!(p[0], 0.5);
        assert_eq!(p[199], 0.5);
        assert_eq!(p[200], 0.6);
        assert_eq!(p[500], 0.8);
        assert_eq!(p[549], 0.8);
        // day 551 (1-based) is index 550
        assert!((p[550] - (0.55 + 1.0 / 3000.0)).abs() < 1e-15);
        assert!((p[1202] - (0.55 + 653.0 / 3000.0)).abs() < 1e-12);
        let s = gen_stream(&spec).unwrap();
        assert_eq!(s.len(), 1203);
        assert!(s.n().iter().all(|&n| n == 200));
    }

    #[test]
    fn text_spec_matches_builtin() {
        let parsed = parse_spec(&benchmark_spec_text(5)).unwrap();
        assert_eq!(parsed, benchmark_spec(5));
    }

    #[test]
    fn zero_and_one_proportions() {
        let s = gen_null_stream(50, 30, 0.0, 2).unwrap();
        assert!(s.y().iter().all(|&y| y == 0));
        let s = gen_null_stream(50, 30, 1.0, 2).unwrap();
        assert_eq!(s.y(), s.n());
    }

    #[test]
    fn null_stream_is_valid_and_seeded() {
        let a = gen_null_stream(100, 40, 0.3, 1).unwrap();
        assert!(a.points().iter().all(|p| p.y <= p.n));
        let b = gen_null_stream(100, 40, 0.3, 2).unwrap();
        assert_ne!(a.y(), b.y());
        assert_eq!(a.dates(), b.dates());
        assert_eq!(a, gen_null_stream(100, 40, 0.3, 1).unwrap());
    }

    #[test]
    fn long_segment_mean_within_clt_band() {
        let (n, p, len) = (200u64, 0.37, 5000usize);
        let s = gen_null_stream(len, n, p, 99).unwrap();
        let mean = s.raw_proportions().iter().sum::<f64>() / len as f64;
        let band = 3.0 * (p * (1.0 - p) / (n as f64 * len as f64)).sqrt();
        assert!((mean - p).abs() <= band, "{mean}");
    }

    #[test]
    fn ramp_out_of_range_is_rejected_with_line() {
        let text = "seed = 1\nn_per_day = 10\n\n[[segment]]\nlength = 10\np = 0.5\n\n\
                    [[segment]]\nlength = 100\nintercept = 0.9\nslope = 0.01\n";
        match parse_spec(text) {
            Err(Error::Spec(msg)) => assert!(msg.starts_with("line 8"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let text = "seed = 1\nn_per_day = 10\n[[segment]]\nlength = = 3\n";
        match parse_spec(text) {
            Err(Error::Spec(msg)) => assert!(msg.starts_with("line 4"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        let text = "seed = 1\nn_per_day = 10\n[[segment]]\nlength = 3\n";
        assert!(parse_spec(text).is_err());
    }

    #[test]
    fn per_day_trials() {
        let text = "seed = 3\nn_per_day = [5, 6, 7]\n[[segment]]\nlength = 3\np = 0.5\n";
        let spec = parse_spec(text).unwrap();
        let s = gen_stream(&spec).unwrap();
        assert_eq!(s.n(), vec![5, 6, 7]);
        let bad = "seed = 3\nn_per_day = [5, 6]\n[[segment]]\nlength = 3\np = 0.5\n";
        assert!(parse_spec(bad).is_err());
    }
}
