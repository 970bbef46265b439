use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}: tagged count {count} exceeds daily total {total}")]
    CountExceedsTotal { row: usize, count: u64, total: u64 },

    #[error("row {row}: day {date} has conflicting daily totals {first} and {second}")]
    InconsistentTotal {
        row: usize,
        date: String,
        first: u64,
        second: u64,
    },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("series is empty")]
    EmptySeries,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input contains NaN")]
    NanInput,

    #[error("series too short: need at least {needed} points, have {actual}")]
    SeriesTooShort { needed: usize, actual: usize },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error(
        "ADMM did not converge in {iterations} iterations \
         (primal residual {primal:.3e}, dual residual {dual:.3e})"
    )]
    AdmmNotConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("solver diverged at iteration {iteration}: objective is not finite")]
    SolverDiverged { iteration: usize },

    #[error("penalty is incompatible with the series: {0}")]
    IncompatiblePenalty(String),

    #[error("degenerate null: pooled proportion is {0}")]
    DegenerateNull(f64),

    #[error("degenerate baseline: global proportion is {0}")]
    DegenerateBaseline(f64),

    #[error("empty window at gap {gap}")]
    EmptyWindow { gap: usize },

    #[error("no quiet stretch admits a window of {window} points")]
    NoNullPlacement { window: usize },

    #[error("no objective trace was recorded")]
    NoTrace,

    #[error("fold {fold}, lambda {lambda}: {source}")]
    CrossValidation {
        fold: usize,
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("synthetic spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
