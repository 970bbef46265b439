//! Binomial count streams: one `(date, y, n)` observation per retained day.
//!
//! A stream holds, for a single tag, the number of tagged documents `y` out
//! of the `n` documents seen on each day. Days with no traffic at all are not
//! observations; they widen the spacing between neighbouring points instead.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Date used for generated series that carry no calendar of their own.
pub const DEFAULT_START_DATE: NaiveDate = match NaiveDate::from_ymd_opt(2000, 1, 1) {
    Some(d) => d,
    None => panic!("invalid default date"),
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservationPoint {
    pub date: NaiveDate,
    /// 0-based position within the (preprocessed) series.
    pub index: usize,
    pub y: u64,
    pub n: u64,
}

impl ObservationPoint {
    pub fn proportion(&self) -> f64 {
        self.y as f64 / self.n as f64
    }
}

/// An immutable, validated count series for one tag.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSeries {
    tag: String,
    points: Vec<ObservationPoint>,
    spacing: Vec<f64>,
}

impl StreamSeries {
    /// Builds a series from parallel date/count vectors.
    ///
    /// Dates must be strictly increasing and every day must satisfy
    /// `1 <= n` and `y <= n`.
    pub fn new(tag: impl Into<String>, dates: &[NaiveDate], y: &[u64], n: &[u64]) -> Result<Self> {
        if dates.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: dates.len(),
                actual: y.len(),
            });
        }
        if dates.len() != n.len() {
            return Err(Error::LengthMismatch {
                expected: dates.len(),
                actual: n.len(),
            });
        }
        if dates.is_empty() {
            return Err(Error::EmptySeries);
        }
        let mut points = Vec::with_capacity(dates.len());
        for (i, ((&date, &yi), &ni)) in dates.iter().zip(y).zip(n).enumerate() {
            if ni == 0 {
                return Err(Error::InvalidSeries(format!("day {date} has zero total")));
            }
            if yi > ni {
                return Err(Error::InvalidSeries(format!(
                    "day {date} has count {yi} above total {ni}"
                )));
            }
            if let Some(prev) = points.last().map(|p: &ObservationPoint| p.date) {
                if date <= prev {
                    return Err(Error::InvalidSeries(format!(
                        "dates not strictly increasing at {date}"
                    )));
                }
            }
            points.push(ObservationPoint {
                date,
                index: i,
                y: yi,
                n: ni,
            });
        }
        let spacing = points
            .windows(2)
            .map(|w| (w[1].date - w[0].date).num_days() as f64)
            .collect();
        Ok(Self {
            tag: tag.into(),
            points,
            spacing,
        })
    }

    /// Builds a daily series starting at [`DEFAULT_START_DATE`].
    pub fn daily(tag: impl Into<String>, y: &[u64], n: &[u64]) -> Result<Self> {
        Self::daily_from(tag, DEFAULT_START_DATE, y, n)
    }

    pub fn daily_from(tag: impl Into<String>, start: NaiveDate, y: &[u64], n: &[u64]) -> Result<Self> {
        let dates: Vec<NaiveDate> = (0..y.len())
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        Self::new(tag, &dates, y, n)
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn with_tag(&self, tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            ..self.clone()
        }
    }

    pub fn points(&self) -> &[ObservationPoint] {
        &self.points
    }

    /// Calendar-day gaps between consecutive points (length `len() - 1`).
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_equispaced(&self) -> bool {
        self.spacing.iter().all(|&d| d == 1.0)
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.points.iter().map(|p| p.date).collect()
    }

    pub fn y(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.y).collect()
    }

    pub fn n(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.n).collect()
    }

    pub fn y_f64(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y as f64).collect()
    }

    pub fn n_f64(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.n as f64).collect()
    }

    pub fn raw_proportions(&self) -> Vec<f64> {
        self.points.iter().map(ObservationPoint::proportion).collect()
    }

    pub fn total_y(&self) -> u64 {
        self.points.iter().map(|p| p.y).sum()
    }

    pub fn total_n(&self) -> u64 {
        self.points.iter().map(|p| p.n).sum()
    }

    /// Position of the point observed on `date`, if any.
    pub fn position_of(&self, date: NaiveDate) -> Option<usize> {
        self.points.binary_search_by_key(&date, |p| p.date).ok()
    }

    /// Keeps the points at `indices` (ascending), re-indexing and widening
    /// the spacing across dropped points.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let dates: Vec<_> = indices.iter().map(|&i| self.points[i].date).collect();
        let y: Vec<_> = indices.iter().map(|&i| self.points[i].y).collect();
        let n: Vec<_> = indices.iter().map(|&i| self.points[i].n).collect();
        Self::new(self.tag.clone(), &dates, &y, &n)
    }

    /// Keeps the points satisfying `keep`.
    pub fn retain(&self, mut keep: impl FnMut(&ObservationPoint) -> bool) -> Result<Self> {
        let indices: Vec<usize> = self
            .points
            .iter()
            .filter(|p| keep(p))
            .map(|p| p.index)
            .collect();
        if indices.is_empty() {
            return Err(Error::EmptySeries);
        }
        self.select(&indices)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessConfig {
    /// Days whose total document count is below this are dropped.
    pub min_daily_total: u64,
}

impl PreprocessConfig {
    pub fn new(min_daily_total: u64) -> Result<Self> {
        if min_daily_total == 0 {
            return Err(Error::InvalidArgument("min_daily_total must be at least 1".into()));
        }
        Ok(Self { min_daily_total })
    }
}

/// Drops low-traffic days. Spacing widens across the removed days.
pub fn filter_low_traffic(series: &StreamSeries, cfg: &PreprocessConfig) -> Result<StreamSeries> {
    series.retain(|p| p.n >= cfg.min_daily_total)
}

/// Pooled proportion `sum(y) / sum(n)` and mean daily total `sum(n) / N`.
pub fn global_proportion(series: &StreamSeries) -> (f64, f64) {
    let total_y = series.total_y() as f64;
    let total_n = series.total_n() as f64;
    (total_y / total_n, total_n / series.len() as f64)
}

/// Parses `date,tag,count,total` records into one series per tag.
///
/// The set of observed days is the union of dates appearing anywhere in the
/// input; a tag absent on an observed day gets `y = 0` with that day's total.
/// Days whose total is zero carry no information and are skipped.
pub fn parse_streams<R: Read>(reader: R) -> Result<BTreeMap<String, StreamSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let expected = ["date", "tag", "count", "total"];
    if header.len() < expected.len() || expected.iter().zip(header.iter()).any(|(a, b)| *a != b) {
        return Err(Error::Parse {
            row: 1,
            message: format!("expected header starting with {}", expected.join(",")),
        });
    }

    let mut totals: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    let mut counts: BTreeMap<String, BTreeMap<NaiveDate, u64>> = BTreeMap::new();

    for (i, record) in rdr.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let field = |k: usize| record.get(k).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(0), "%Y-%m-%d").map_err(|e| Error::Parse {
            row,
            message: format!("bad date {:?}: {e}", field(0)),
        })?;
        let tag = field(1);
        if tag.is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty tag".into(),
            });
        }
        let parse_count = |k: usize, name: &str| {
            field(k).parse::<u64>().map_err(|e| Error::Parse {
                row,
                message: format!("bad {name} {:?}: {e}", field(k)),
            })
        };
        let count = parse_count(2, "count")?;
        let total = parse_count(3, "total")?;
        if count > total {
            return Err(Error::CountExceedsTotal { row, count, total });
        }
        match totals.get(&date) {
            Some(&first) if first != total => {
                return Err(Error::InconsistentTotal {
                    row,
                    date: date.to_string(),
                    first,
                    second: total,
                })
            }
            Some(_) => {}
            None => {
                totals.insert(date, total);
            }
        }
        let per_tag = counts.entry(tag.to_string()).or_default();
        if per_tag.insert(date, count).is_some() {
            return Err(Error::Parse {
                row,
                message: format!("duplicate record for tag {tag} on {date}"),
            });
        }
    }

    let days: Vec<(NaiveDate, u64)> = totals.into_iter().filter(|&(_, n)| n > 0).collect();
    let mut out = BTreeMap::new();
    for (tag, per_tag) in counts {
        let dates: Vec<_> = days.iter().map(|&(d, _)| d).collect();
        let n: Vec<_> = days.iter().map(|&(_, n)| n).collect();
        let y: Vec<_> = days
            .iter()
            .map(|(d, _)| per_tag.get(d).copied().unwrap_or(0))
            .collect();
        if dates.is_empty() {
            continue;
        }
        let series = StreamSeries::new(tag.clone(), &dates, &y, &n)?;
        out.insert(tag, series);
    }
    Ok(out)
}

/// Writes series back out in the `date,tag,count,total` input schema.
pub fn write_streams<'a, W: Write>(
    writer: W,
    streams: impl IntoIterator<Item = &'a StreamSeries>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    wtr.write_record(["date", "tag", "count", "total"]).map_err(to_io)?;
    for series in streams {
        for p in series.points() {
            wtr.write_record([
                p.date.to_string(),
                series.tag().to_string(),
                p.y.to_string(),
                p.n.to_string(),
            ])
            .map_err(to_io)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Union of all dates across a set of streams.
pub fn all_dates<'a>(streams: impl IntoIterator<Item = &'a StreamSeries>) -> BTreeSet<NaiveDate> {
    streams
        .into_iter()
        .flat_map(|s| s.points().iter().map(|p| p.date))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2001, 3, day).unwrap()
    }

    #[test]
    fn parse_restructures_rows() {
        let text = "date,tag,count,total\n2001-03-01,FI,2,10\n2001-03-02,FI,3,12\n";
        let streams = parse_streams(text.as_bytes()).unwrap();
        let fi = &streams["FI"];
        assert_eq!(fi.dates(), vec![d(1), d(2)]);
        assert_eq!(fi.y(), vec![2, 3]);
        assert_eq!(fi.n(), vec![10, 12]);
        assert_eq!(fi.spacing(), &[1.0]);
    }

    #[test]
    fn parse_fills_absent_tag_with_zero() {
        let text = "date,tag,count,total\n\
                    2001-03-01,FI,2,10\n\
                    2001-03-02,PREL,5,12\n";
        let streams = parse_streams(text.as_bytes()).unwrap();
        let fi = &streams["FI"];
        assert_eq!(fi.y(), vec![2, 0]);
        assert_eq!(fi.n(), vec![10, 12]);
        assert_eq!(streams["PREL"].y(), vec![0, 5]);
    }

    #[test]
    fn parse_rejects_count_above_total() {
        let text = "date,tag,count,total\n2001-03-01,FI,11,10\n";
        let err = parse_streams(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::CountExceedsTotal { row: 2, count: 11, total: 10 }));
    }

    #[test]
    fn parse_names_malformed_row() {
        let text = "date,tag,count,total\n2001-03-01,FI,1,10\n2001-13-01,FI,1,10\n";
        match parse_streams(text.as_bytes()).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "date,tag,count,total\n2001-03-01,FI,x,10\n";
        assert!(matches!(
            parse_streams(text.as_bytes()).unwrap_err(),
            Error::Parse { row: 2, .. }
        ));
    }

    #[test]
    fn parse_rejects_conflicting_totals() {
        let text = "date,tag,count,total\n2001-03-01,FI,1,10\n2001-03-01,PREL,1,11\n";
        assert!(matches!(
            parse_streams(text.as_bytes()).unwrap_err(),
            Error::InconsistentTotal { row: 3, .. }
        ));
    }

    #[test]
    fn missing_days_widen_spacing() {
        let text = "date,tag,count,total\n2001-03-01,FI,1,10\n2001-03-04,FI,1,10\n";
        let fi = &parse_streams(text.as_bytes()).unwrap()["FI"];
        assert_eq!(fi.spacing(), &[3.0]);
    }

    #[test]
    fn filter_drops_low_traffic_days() {
        let s = StreamSeries::new("A", &[d(1), d(2), d(3)], &[1, 1, 1], &[100, 3, 120]).unwrap();
        let f = filter_low_traffic(&s, &PreprocessConfig::new(50).unwrap()).unwrap();
        assert_eq!(f.n(), vec![100, 120]);
        assert_eq!(f.spacing(), &[2.0]);
        assert_eq!(f.points()[1].index, 1);

        let same = filter_low_traffic(&s, &PreprocessConfig::new(1).unwrap()).unwrap();
        assert_eq!(same, s);

        let err = filter_low_traffic(&s, &PreprocessConfig::new(1000).unwrap()).unwrap_err();
        assert!(matches!(err, Error::EmptySeries));
        assert!(PreprocessConfig::new(0).is_err());
    }

    #[test]
    fn global_proportion_examples() {
        let s = StreamSeries::daily("A", &[5, 5], &[10, 10]).unwrap();
        assert_eq!(global_proportion(&s), (0.5, 10.0));
        let s = StreamSeries::daily("A", &[0, 0], &[4, 6]).unwrap();
        assert_eq!(global_proportion(&s), (0.0, 5.0));
        let s = StreamSeries::daily("A", &[1, 2, 3], &[10, 10, 10]).unwrap();
        let (p, n) = global_proportion(&s);
        assert!((p - 0.2).abs() < 1e-15);
        assert_eq!(n, 10.0);
    }

    #[test]
    fn constructor_validates() {
        assert!(StreamSeries::new("A", &[d(2), d(1)], &[0, 0], &[1, 1]).is_err());
        assert!(StreamSeries::new("A", &[d(1), d(1)], &[0, 0], &[1, 1]).is_err());
        assert!(StreamSeries::new("A", &[d(1)], &[0], &[0]).is_err());
        assert!(StreamSeries::new("A", &[], &[], &[]).is_err());
    }

    fn arb_series() -> impl Strategy<Value = StreamSeries> {
        prop::collection::vec((1u64..4, 1u64..300, 0.0f64..1.0), 1..40).prop_map(|rows| {
            let mut date = d(1);
            let mut dates = Vec::new();
            let mut y = Vec::new();
            let mut n = Vec::new();
            for (gap, total, frac) in rows {
                date = date + chrono::Days::new(gap);
                dates.push(date);
                n.push(total);
                y.push((frac * total as f64).floor() as u64);
            }
            StreamSeries::new("T", &dates, &y, &n).unwrap()
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_round_trips(s in arb_series()) {
            let mut buf = Vec::new();
            write_streams(&mut buf, [&s]).unwrap();
            let back = parse_streams(buf.as_slice()).unwrap();
            prop_assert_eq!(&back["T"], &s);
        }

        #[test]
        fn filter_is_idempotent_and_spacing_matches_calendar(
            s in arb_series(),
            threshold in 1u64..300,
        ) {
            let cfg = PreprocessConfig::new(threshold).unwrap();
            if let Ok(once) = filter_low_traffic(&s, &cfg) {
                let twice = filter_low_traffic(&once, &cfg).unwrap();
                prop_assert_eq!(&once, &twice);
                for (w, &gap) in once.points().windows(2).zip(once.spacing()) {
                    prop_assert_eq!((w[1].date - w[0].date).num_days() as f64, gap);
                    prop_assert!(gap >= 1.0);
                }
            }
        }
    }
}
