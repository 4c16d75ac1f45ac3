use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// Variants split into two families: input/validation problems
/// ([`Error::is_validation`]) and numerical failures. The CLI maps them to
/// distinct exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated at index {index}: {reason}")]
    Precondition { index: usize, reason: String },

    #[error("grid must contain at least one point")]
    EmptyGrid,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("smoothing weight mismatch: trace was built with alpha = {trace}, configuration requires alpha = {expected}")]
    AlphaMismatch { trace: f64, expected: f64 },

    #[error("invalid record {index}: {reason}")]
    InvalidRecord { index: u64, reason: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("truncated input: header declares {expected} records, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("non-finite value in field `{0}`")]
    NonFinite(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("negative Ritz node {node} encountered with shift mode disabled")]
    NegativeRitzNode { node: f64 },

    #[error("power-law fit failed after {} objective evaluations: {reason}", .trace.len())]
    FitFailure { reason: String, trace: Vec<(f64, f64)> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by invalid input rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Factorization(_)
                | Error::NegativeRitzNode { .. }
                | Error::FitFailure { .. }
                | Error::Numerical(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Schema(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
