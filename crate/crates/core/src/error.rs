use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: &'static str },

    #[error("{what} is singular or near-singular (condition estimate {cond:.3e})")]
    Singular { what: &'static str, cond: f64 },

    #[error("rank-deficient problem: {0}")]
    RankDeficient(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("pivot underflow: numerator and denominator both vanish ({detail})")]
    PivotUnderflow { detail: String },

    #[error("index {j} is not in the active set")]
    NotInActiveSet { j: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("csv parse error at row {row}, column {column}: {detail}")]
    CsvParse {
        row: usize,
        column: String,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for usage/IO problems, 1 for
    /// computation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::Io(_) | Error::Csv(_) | Error::CsvParse { .. } => 2,
            _ => 1,
        }
    }
}
