use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};

use burstseg::jumps::{analyze_jumps, JumpConfig, LambdaChoice};
use burstseg::select::{fit_cross_validated, DEFAULT_FOLDS, DEFAULT_GRID_SIZE};
use burstseg::stream::{filter_low_traffic, parse_streams, write_streams, PreprocessConfig};
use burstseg::{
    batch_screen, extract_jumps, fit_segmentation, gen_stream, parse_spec, rank_bursts, BaselinePolicy, CvResult,
    PenaltyKind, PenaltySpec, SegmentedFit, SolverConfig, StreamSeries,
};

use crate::manifest::RunManifest;
use crate::output::{sha256_hex, ErrorLog, Outputs, Table};

/// Whether a run produced anything worth reading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Done,
    /// The analysis ran but came back empty or fully degenerate.
    Empty(String),
}

/// A finished run, not yet written.
pub struct Run {
    pub manifest: RunManifest,
    pub outputs: Outputs,
    pub status: Status,
}

type ArgList = Vec<(String, String)>;

fn push(args: &mut ArgList, key: &str, value: impl ToString) {
    args.push((key.to_string(), value.to_string()));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    L1,
    L0,
    Tf,
}

impl PenaltyArg {
    fn kind(self) -> PenaltyKind {
        match self {
            PenaltyArg::L1 => PenaltyKind::FusedL1,
            PenaltyArg::L0 => PenaltyKind::FusedL0,
            PenaltyArg::Tf => PenaltyKind::TrendL1,
        }
    }

    fn name(self) -> &'static str {
        self.kind().as_str()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    Mean,
    Median,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Stream file with columns date,tag,count,total
    #[arg(long)]
    pub input: PathBuf,

    /// Drop days whose total document count is below this
    #[arg(long, default_value_t = 1)]
    pub min_daily_total: u64,
}

impl InputArgs {
    fn push_args(&self, args: &mut ArgList, input: &Path) {
        push(args, "input", input.display());
        push(args, "min-daily-total", self.min_daily_total);
    }
}

/// Parsed and filtered input, with its digest and resolved path.
struct Loaded {
    path: PathBuf,
    sha256: String,
    streams: BTreeMap<String, StreamSeries>,
    /// Streams emptied by the traffic filter.
    dropped: Vec<(String, burstseg::Error)>,
}

fn load(input: &InputArgs) -> Result<Loaded> {
    let path = fs::canonicalize(&input.input).with_context(|| format!("input {}", input.input.display()))?;
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = parse_streams(bytes.as_slice()).with_context(|| format!("parsing {}", path.display()))?;
    let cfg = PreprocessConfig::new(input.min_daily_total)?;
    let mut streams = BTreeMap::new();
    let mut dropped = Vec::new();
    for (tag, s) in parsed {
        match filter_low_traffic(&s, &cfg) {
            Ok(f) => {
                streams.insert(tag, f);
            }
            Err(e) => dropped.push((tag, e)),
        }
    }
    Ok(Loaded {
        path,
        sha256: sha256_hex(&bytes),
        streams,
        dropped,
    })
}

fn select_stream<'a>(loaded: &'a Loaded, tag: Option<&str>) -> Result<&'a StreamSeries> {
    match tag {
        Some(t) => loaded
            .streams
            .get(t)
            .ok_or_else(|| anyhow!("unknown tag {t:?}; available: {}", tag_list(loaded))),
        None if loaded.streams.len() == 1 => Ok(loaded.streams.values().next().expect("one stream")),
        None => bail!("input has several tags, choose one with --tag: {}", tag_list(loaded)),
    }
}

fn tag_list(loaded: &Loaded) -> String {
    loaded.streams.keys().cloned().collect::<Vec<_>>().join(", ")
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0)
    })
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Proximal-gradient iteration budget
    #[arg(long, default_value_t = 50_000)]
    pub max_iter: usize,

    /// Stop when the squared step norm falls below this
    #[arg(long, default_value_t = 1e-10)]
    pub eps_stationary: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            max_iter: self.max_iter,
            eps_stationary: self.eps_stationary,
            record_trace: false,
            ..SolverConfig::default()
        }
    }

    fn push_args(&self, args: &mut ArgList) {
        push(args, "max-iter", self.max_iter);
        push(args, "eps-stationary", self.eps_stationary);
    }
}

/// How `λ` is picked: a fixed value, or cross-validation.
#[derive(Debug, Clone, Args)]
pub struct LambdaArgs {
    /// Penalty weight; cross-validated when omitted
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Number of cross-validation folds
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,

    /// Number of grid values for cross-validation
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid: usize,

    /// Use the one-standard-error choice instead of the CV minimum
    #[arg(long)]
    pub one_se: bool,
}

impl LambdaArgs {
    fn push_args(&self, args: &mut ArgList) {
        if let Some(l) = self.lambda {
            push(args, "lambda", l);
        }
        push(args, "folds", self.folds);
        push(args, "grid", self.grid);
        if self.one_se {
            push(args, "one-se", true);
        }
    }

    fn choice(&self) -> LambdaChoice {
        match self.lambda {
            Some(l) => LambdaChoice::Fixed(l),
            None => LambdaChoice::CrossValidated {
                folds: self.folds,
                grid_size: self.grid,
                one_se: self.one_se,
            },
        }
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn fit_table(series: &StreamSeries, fit: &SegmentedFit) -> Table {
    let mut t = Table::new(&["date", "y", "n", "p_raw", "p_hat", "theta_hat"]);
    for ((p, &ph), &th) in series.points().iter().zip(&fit.p_hat).zip(&fit.theta_hat) {
        t.push(vec![
            p.date.to_string(),
            p.y.to_string(),
            p.n.to_string(),
            fmt_f(p.proportion()),
            fmt_f(ph),
            fmt_f(th),
        ]);
    }
    t
}

fn jump_table(series: &StreamSeries, fit: &SegmentedFit) -> Table {
    let mut t = Table::new(&["gap_index", "left_date", "right_date", "left_level", "right_level", "magnitude"]);
    let pts = series.points();
    for j in extract_jumps(fit, burstseg::segment::DEFAULT_JUMP_TOL) {
        t.push(vec![
            j.index.to_string(),
            pts[j.index].date.to_string(),
            pts[j.index + 1].date.to_string(),
            fmt_f(j.left_level),
            fmt_f(j.right_level),
            fmt_f(j.magnitude),
        ]);
    }
    t
}

fn cv_table(cv: &CvResult) -> Table {
    let mut t = Table::new(&["lambda", "cv_mean", "cv_se"]);
    for i in 0..cv.lambda_grid.len() {
        t.push(vec![fmt_f(cv.lambda_grid[i]), fmt_f(cv.cv_mean[i]), fmt_f(cv.cv_se[i])]);
    }
    t
}

fn key_values(pairs: &[(&str, String)]) -> Vec<u8> {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect::<String>().into_bytes()
}

// ---------------------------------------------------------------- screen

#[derive(Debug, Clone, Args)]
pub struct ScreenArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Window half-width in retained days
    #[arg(long, default_value_t = 5)]
    pub delta: usize,

    /// Number of permutations
    #[arg(long, default_value_t = 1000)]
    pub perms: usize,

    /// Master seed; generated and recorded when omitted
    #[arg(long)]
    pub seed: Option<u64>,

    /// Significance level for the survivor counts (repeatable)
    #[arg(long)]
    pub threshold: Vec<f64>,
}

pub fn screen(a: &ScreenArgs) -> Result<Run> {
    let loaded = load(&a.input)?;
    let seed = resolve_seed(a.seed);
    let mut args = ArgList::new();
    a.input.push_args(&mut args, &loaded.path);
    push(&mut args, "delta", a.delta);
    push(&mut args, "perms", a.perms);
    push(&mut args, "seed", seed);
    for t in &a.threshold {
        push(&mut args, "threshold", t);
    }

    let mut log = ErrorLog::default();
    for (tag, e) in &loaded.dropped {
        log.record(tag, e);
    }
    let (results, survivors) = if loaded.streams.is_empty() {
        (Vec::new(), a.threshold.iter().map(|&t| (t, 0)).collect())
    } else {
        let report = batch_screen(&loaded.streams, a.delta, a.perms, seed, &a.threshold)?;
        for (tag, e) in &report.errors {
            log.record(tag, e);
        }
        (report.results, report.survivors)
    };

    let mut table = Table::new(&["tag", "statistic", "argmax_date", "p_value"]);
    for (tag, r) in &results {
        let date = loaded.streams[tag].points()[r.argmax_t].date;
        table.push(vec![tag.clone(), fmt_f(r.statistic_t), date.to_string(), fmt_f(r.p_value)]);
    }
    let mut counts = Table::new(&["threshold", "survivors"]);
    for (t, c) in survivors {
        counts.push(vec![fmt_f(t), c.to_string()]);
    }

    let mut outputs = Outputs::default();
    outputs.add_table("screen.tsv", &table)?;
    outputs.add_table("survivors.tsv", &counts)?;
    outputs.add("errors.log", log.render());

    let status = if results.is_empty() {
        Status::Empty("no stream could be tested".into())
    } else {
        Status::Done
    };
    let mut manifest = RunManifest::new("screen", args);
    manifest.input_sha256 = Some(loaded.sha256);
    Ok(Run {
        manifest,
        outputs,
        status,
    })
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Stream to fit; optional when the input has one tag
    #[arg(long)]
    pub tag: Option<String>,

    #[arg(long, value_enum, default_value_t = PenaltyArg::L0)]
    pub penalty: PenaltyArg,

    /// Penalty weight
    #[arg(long, required_unless_present = "cv", conflicts_with = "cv")]
    pub lambda: Option<f64>,

    /// Choose the penalty weight by cross-validation
    #[arg(long)]
    pub cv: bool,

    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,

    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid: usize,

    #[command(flatten)]
    pub solver: SolverArgs,
}

pub fn fit(a: &FitArgs) -> Result<Run> {
    let loaded = load(&a.input)?;
    let series = select_stream(&loaded, a.tag.as_deref())?;
    let cfg = a.solver.config();
    let kind = a.penalty.kind();

    let mut args = ArgList::new();
    a.input.push_args(&mut args, &loaded.path);
    push(&mut args, "tag", series.tag());
    push(&mut args, "penalty", a.penalty.name());
    if let Some(l) = a.lambda {
        push(&mut args, "lambda", l);
    }
    if a.cv {
        push(&mut args, "cv", true);
        push(&mut args, "folds", a.folds);
        push(&mut args, "grid", a.grid);
    }
    a.solver.push_args(&mut args);

    let mut outputs = Outputs::default();
    let mut summary = vec![("tag", series.tag().to_string()), ("penalty", a.penalty.name().to_string())];
    let fit = if a.cv {
        let (cv, fit) = fit_cross_validated(series, kind, a.folds, a.grid, false, &cfg)?;
        let fit_1se = fit_segmentation(series, &PenaltySpec::for_series(kind, series), cv.lambda_1se, &cfg)?;
        summary.push(("lambda_cv", fmt_f(cv.lambda_cv)));
        summary.push(("lambda_1se", fmt_f(cv.lambda_1se)));
        outputs.add_table("cv.tsv", &cv_table(&cv))?;
        outputs.add_table("fit_1se.tsv", &fit_table(series, &fit_1se))?;
        outputs.add_table("jumps_1se.tsv", &jump_table(series, &fit_1se))?;
        fit
    } else {
        let lambda = a.lambda.expect("clap requires lambda without --cv");
        fit_segmentation(series, &PenaltySpec::for_series(kind, series), lambda, &cfg)?
    };
    summary.push(("lambda", fmt_f(fit.lambda)));
    summary.push(("iterations", fit.iterations.to_string()));
    summary.push(("converged", fit.converged.to_string()));
    summary.push(("stalled", fit.diagnostics.stalled.to_string()));
    outputs.add_table("fit.tsv", &fit_table(series, &fit))?;
    outputs.add_table("jumps.tsv", &jump_table(series, &fit))?;
    outputs.add("summary.txt", key_values(&summary));

    let mut manifest = RunManifest::new("fit", args);
    manifest.input_sha256 = Some(loaded.sha256);
    Ok(Run {
        manifest,
        outputs,
        status: Status::Done,
    })
}

// ---------------------------------------------------------------- jumps

#[derive(Debug, Clone, Args)]
pub struct JumpsArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Stream to score; optional when the input has one tag
    #[arg(long)]
    pub tag: Option<String>,

    #[arg(long, value_enum, default_value_t = PenaltyArg::L0)]
    pub penalty: PenaltyArg,

    #[command(flatten)]
    pub lambda: LambdaArgs,

    /// Window half-width in test-half days
    #[arg(long, default_value_t = 5)]
    pub delta: usize,

    /// Size of the permutation null
    #[arg(long, default_value_t = 1000)]
    pub perms: usize,

    /// Seed of the sample split and the null; generated and recorded when omitted
    #[arg(long)]
    pub seed: Option<u64>,

    /// Keep only jumps with p at most this, and refit the stream
    #[arg(long)]
    pub alpha: Option<f64>,

    #[command(flatten)]
    pub solver: SolverArgs,
}

pub fn jumps(a: &JumpsArgs) -> Result<Run> {
    let loaded = load(&a.input)?;
    let series = select_stream(&loaded, a.tag.as_deref())?;
    let seed = resolve_seed(a.seed);

    let mut args = ArgList::new();
    a.input.push_args(&mut args, &loaded.path);
    push(&mut args, "tag", series.tag());
    push(&mut args, "penalty", a.penalty.name());
    a.lambda.push_args(&mut args);
    push(&mut args, "delta", a.delta);
    push(&mut args, "perms", a.perms);
    push(&mut args, "seed", seed);
    if let Some(al) = a.alpha {
        push(&mut args, "alpha", al);
    }
    a.solver.push_args(&mut args);

    let cfg = JumpConfig {
        penalty: a.penalty.kind(),
        lambda: a.lambda.choice(),
        delta: a.delta,
        permutations: a.perms,
        seed,
        alpha: a.alpha,
        solver: a.solver.config(),
    };
    let out = analyze_jumps(series, &cfg)?;

    let mut table = Table::new(&[
        "rank",
        "left_date",
        "right_date",
        "train_gap",
        "left_level",
        "right_level",
        "magnitude",
        "lrt_stat",
        "p_value",
        "null_size",
    ]);
    for (i, r) in out.scores.records.iter().enumerate() {
        table.push(vec![
            (i + 1).to_string(),
            r.left_date.to_string(),
            r.right_date.to_string(),
            r.location.index.to_string(),
            fmt_f(r.location.left_level),
            fmt_f(r.location.right_level),
            fmt_f(r.location.magnitude),
            fmt_f(r.lrt_stat),
            fmt_f(r.p_value),
            r.null_sample_size.to_string(),
        ]);
    }
    let mut log = ErrorLog::default();
    let train_pts = out.split.train.points();
    for (j, e) in &out.scores.errors {
        log.record(series.tag(), &format!("jump after {}: {e}", train_pts[j.index].date));
    }

    let mut outputs = Outputs::default();
    outputs.add_table("jumps.tsv", &table)?;
    if let Some(pruned) = &out.pruned {
        outputs.add_table("pruned_fit.tsv", &fit_table(series, pruned))?;
        outputs.add_table("pruned_jumps.tsv", &jump_table(series, pruned))?;
    }
    outputs.add(
        "summary.txt",
        key_values(&[
            ("tag", series.tag().to_string()),
            ("seed", seed.to_string()),
            ("lambda", fmt_f(out.lambda)),
            ("train_days", out.split.train.len().to_string()),
            ("test_days", out.split.test.len().to_string()),
            ("records", out.scores.records.len().to_string()),
        ]),
    );
    outputs.add("errors.log", log.render());

    let status = if out.scores.records.is_empty() {
        Status::Empty("the train-half fit has no jumps".into())
    } else {
        Status::Done
    };
    let mut manifest = RunManifest::new("jumps", args);
    manifest.input_sha256 = Some(loaded.sha256);
    Ok(Run {
        manifest,
        outputs,
        status,
    })
}

// ---------------------------------------------------------------- bursts

#[derive(Debug, Clone, Args)]
pub struct BurstsArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long, value_enum, default_value_t = PenaltyArg::L0)]
    pub penalty: PenaltyArg,

    #[command(flatten)]
    pub lambda: LambdaArgs,

    /// Proportion estimate the baseline is built on
    #[arg(long, value_enum, default_value_t = BaselineArg::Mean)]
    pub baseline: BaselineArg,

    /// Keep at most this many rows
    #[arg(long)]
    pub top: Option<usize>,

    #[command(flatten)]
    pub solver: SolverArgs,
}

pub fn bursts(a: &BurstsArgs) -> Result<Run> {
    let loaded = load(&a.input)?;
    let kind = a.penalty.kind();
    let cfg = a.solver.config();
    let policy = match a.baseline {
        BaselineArg::Mean => BaselinePolicy::Mean,
        BaselineArg::Median => BaselinePolicy::Median,
    };

    let mut args = ArgList::new();
    a.input.push_args(&mut args, &loaded.path);
    push(&mut args, "penalty", a.penalty.name());
    a.lambda.push_args(&mut args);
    push(&mut args, "baseline", if policy == BaselinePolicy::Mean { "mean" } else { "median" });
    if let Some(t) = a.top {
        push(&mut args, "top", t);
    }
    a.solver.push_args(&mut args);

    let mut log = ErrorLog::default();
    for (tag, e) in &loaded.dropped {
        log.record(tag, e);
    }
    let mut fitted = Vec::new();
    for (tag, series) in &loaded.streams {
        if let Err(e) = burstseg::burst::baseline_with(series, policy) {
            log.record(tag, &e);
            continue;
        }
        let fit = match a.lambda.choice() {
            LambdaChoice::Fixed(l) => fit_segmentation(series, &PenaltySpec::for_series(kind, series), l, &cfg),
            LambdaChoice::CrossValidated { folds, grid_size, one_se } => {
                fit_cross_validated(series, kind, folds, grid_size, one_se, &cfg).map(|r| r.1)
            }
        };
        match fit {
            Ok(f) => fitted.push((series, f)),
            Err(e) => log.record(tag, &e),
        }
    }
    let mut ranked = rank_bursts(fitted.iter().map(|(s, f)| (*s, f)), policy)?;
    if let Some(t) = a.top {
        ranked.truncate(t);
    }

    let mut table = Table::new(&["rank", "tag", "start", "end", "peak", "strength", "baseline_p0"]);
    for (i, b) in ranked.iter().enumerate() {
        table.push(vec![
            (i + 1).to_string(),
            b.tag.clone(),
            b.start.to_string(),
            b.end.to_string(),
            b.peak.to_string(),
            fmt_f(b.strength),
            fmt_f(b.baseline_p0),
        ]);
    }
    let mut outputs = Outputs::default();
    outputs.add_table("bursts.tsv", &table)?;
    outputs.add("errors.log", log.render());

    let status = if table.len() == 0 {
        Status::Empty("no bursts found".into())
    } else {
        Status::Done
    };
    let mut manifest = RunManifest::new("bursts", args);
    manifest.input_sha256 = Some(loaded.sha256);
    Ok(Run {
        manifest,
        outputs,
        status,
    })
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Generator specification (TOML with [[segment]] tables)
    #[arg(long)]
    pub spec: PathBuf,

    /// Overrides the seed in the specification
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn simulate(a: &SimulateArgs) -> Result<Run> {
    let path = fs::canonicalize(&a.spec).with_context(|| format!("spec {}", a.spec.display()))?;
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut spec = parse_spec(&text).with_context(|| format!("in {}", path.display()))?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let series = gen_stream(&spec)?;
    let mut bytes = Vec::new();
    write_streams(&mut bytes, [&series])?;

    let mut args = ArgList::new();
    push(&mut args, "spec", path.display());
    push(&mut args, "seed", spec.seed);
    let mut outputs = Outputs::default();
    outputs.add("streams.csv", bytes);
    let mut manifest = RunManifest::new("simulate", args);
    manifest.input_sha256 = Some(sha256_hex(text.as_bytes()));
    Ok(Run {
        manifest,
        outputs,
        status: Status::Done,
    })
}

/// Recorded input digest check before a replay.
pub fn input_digest(manifest: &RunManifest) -> Result<Option<String>> {
    let key = if manifest.command == "simulate" { "spec" } else { "input" };
    match manifest.args.iter().find(|(k, _)| k == key) {
        Some((_, p)) => Ok(Some(sha256_hex(
            &fs::read(p).with_context(|| format!("reading recorded input {p}"))?,
        ))),
        None => Ok(None),
    }
}
