//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by data ingestion, model fitting and inference.
#[derive(Debug, Error)]
pub enum Error {
    // ---- data / input errors ----
    #[error("missing required column `{0}` in header")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{value}` in column `{column}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { row: usize, column: String },
    #[error("model spec: {0}")]
    InvalidModelSpec(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    // ---- argument errors ----
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quantile level must lie strictly in (0,1), got {0}")]
    InvalidTau(f64),
    #[error("time {0} lies outside the observed range [{1}, {2}]")]
    Extrapolation(f64, f64, f64),
    #[error("no observation within {tol} of t*={t_star}")]
    EmptyWindow { t_star: f64, tol: f64 },

    // ---- numerical errors ----
    #[error("degenerate knots: {0}")]
    DegenerateKnots(String),
    #[error("solver failed to converge within the iteration cap")]
    MaxIterations,
    #[error("ill-conditioned system: {what} (condition estimate {cond:.3e})")]
    IllConditioned { what: String, cond: f64 },
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("no intra-subject pairs: every subject has a single observation")]
    NoPairs,
    #[error("fit at tau={tau} failed: {source}")]
    FitAt {
        tau: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("{failed} of {total} Monte Carlo replicates failed (cap {cap_percent}%)")]
    ReplicateFailures {
        failed: usize,
        total: usize,
        cap_percent: usize,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the input data or its schema, as opposed to
    /// numerical failures of the fitting machinery.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MissingColumn(_)
                | Error::Parse { .. }
                | Error::EmptyInput
                | Error::NonFinite { .. }
                | Error::InvalidModelSpec(_)
                | Error::Io(_)
                | Error::Csv(_)
        )
    }

    /// True for bad caller-supplied arguments (flag values and the like).
    pub fn is_usage_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::InvalidTau(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
