//! Detection, localization, scoring and ranking of bursts of activity in
//! binomial count streams.
//!
//! The pipeline for one stream:
//!
//! 1. [`scan`]: a windowed scan statistic with a permutation null decides
//!    whether the stream has any localized excess at all.
//! 2. [`segment`]: penalized likelihood (fused ℓ1, ℓ0, or trend filtering)
//!    estimates the underlying proportion, with `λ` chosen by [`select`].
//! 3. [`jumps`]: sample splitting assigns a p-value to each fitted jump.
//! 4. [`burst`]: intervals above a baseline are scored by a log-likelihood
//!    ratio and ranked across streams.

pub mod burst;
pub mod error;
pub mod jumps;
pub mod likelihood;
pub mod prox;
pub mod sampling;
pub mod scan;
pub mod segment;
pub mod select;
pub mod stream;
pub mod synth;

pub use burst::{baseline, burst_strength, extract_bursts, rank_bursts, BaselinePolicy, BurstRecord};
pub use error::{Error, Result};
pub use jumps::{
    analyze_jumps, jump_lrt, jump_null_distribution, jump_pvalues, prune_and_refit, quiet_stretches,
    split_sample, JumpAnalysis, JumpConfig, JumpRecord, LambdaChoice, SplitPair,
};
pub use prox::{AdmmConfig, PenaltyKind, PenaltySpec};
pub use scan::{batch_screen, neighborhood_average, permutation_pvalue, scan_statistic, ScanTestResult, ScreenReport};
pub use segment::{
    convergence_report, extract_jumps, fit_segmentation, fit_trend_filter, objective, FitKind,
    JumpLocation, SegmentedFit, SolverConfig,
};
pub use select::{assign_folds, cross_validate, cv_heldout_loss, fit_cross_validated, CvResult};
pub use stream::{
    filter_low_traffic, global_proportion, parse_streams, write_streams, ObservationPoint,
    PreprocessConfig, StreamSeries,
};
pub use synth::{gen_null_stream, gen_stream, parse_spec, PiecewiseSpec};
