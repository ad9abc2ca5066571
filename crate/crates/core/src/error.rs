use thiserror::Error;

/// Errors raised by ingestion, validation and the inference routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error("parse error at row {row}, column {col}")]
    Parse { row: usize, col: String },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: String },

    #[error("empty file")]
    EmptyFile,

    #[error("too few rows: need at least {needed}, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("empty grid")]
    EmptyGrid,

    #[error("invalid alpha {0}: must lie in (0, 1)")]
    InvalidAlpha(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("singular design matrix")]
    SingularDesign,

    #[error("response must be 0/1, found {value} at row {row}")]
    NonBinaryResponse { row: usize, value: f64 },

    #[error("gradient dimension mismatch: expected {expected}, got {got}")]
    GradientDimensionMismatch { expected: usize, got: usize },

    #[error("covariates required for this task")]
    MissingCovariates,

    #[error("unknown method: {0}")]
    UnknownMethod(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
