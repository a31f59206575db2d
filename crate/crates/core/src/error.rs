use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum EricError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("row {row} has zero total after adding the pseudo-count")]
    DegenerateRow { row: usize },

    #[error("{solver} did not converge in {iterations} iterations (primal residual {primal:.3e}, dual residual {dual:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EricError>;

pub(crate) fn dim_mismatch(what: impl Into<String>) -> EricError {
    EricError::DimensionMismatch(what.into())
}
