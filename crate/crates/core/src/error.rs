use thiserror::Error;

/// Errors produced by the factorisation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("matrix has no observed entries")]
    NoObservations,

    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("nonpositive prediction {value} at observed cell ({row}, {col})")]
    NonPositivePrediction { row: usize, col: usize, value: f64 },

    #[error("negative observed value {value} at cell ({row}, {col})")]
    NegativeData { row: usize, col: usize, value: f64 },

    #[error("k-means needs 1 <= k <= number of points (k = {k}, points = {n})")]
    KMeans { k: usize, n: usize },

    #[error("ARD update requested but ARD is disabled")]
    ArdDisabled,

    #[error("could not find a feasible split after {attempts} attempts")]
    SplitInfeasible { attempts: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("csv error at row {row}, column {col}: {reason}")]
    CsvCell {
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { expected: u32, found: u32 },

    #[error("invalid saved state: {0}")]
    InvalidState(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
