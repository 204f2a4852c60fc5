use thiserror::Error;

/// Errors produced by estimation, simulation, and I/O routines.
#[derive(Debug, Error)]
pub enum CovarioError {
    #[error("empty sample")]
    EmptySample,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no estimable lags")]
    NoEstimableLags,
    #[error("degenerate variance")]
    DegenerateVariance,
    #[error("unsupported dimension: expected {expected}, got {got}")]
    UnsupportedDimension { expected: usize, got: usize },
    #[error("lags are not an arithmetic progression from 0")]
    NonArithmeticLags,
    #[error("positivization failed near zero")]
    PositivizationFailed,
    #[error("embedding failed; enlarge padding")]
    EmbeddingFailed,
    #[error("shrinking did not converge within {0} iterations")]
    ShrinkDiverged(usize),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CovarioError>;
