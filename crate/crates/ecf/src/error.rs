use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. Variants carry enough context to point at the
/// offending row/column/file without the caller re-deriving it.
#[derive(Debug, Error)]
pub enum EcfError {
    #[error("dimension mismatch on {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFiniteValue {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("jaccard of two empty sets is undefined")]
    BothEmpty,

    #[error("class {0} has no members")]
    EmptyClass(usize),

    #[error("initial centroids {0} and {1} are identical")]
    DuplicateInitialCentroids(usize, usize),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("cluster count {k} out of range 1..={n}")]
    ClusterCountOutOfRange { k: usize, n: usize },

    #[error("explanation function failed on row {row}: {message}")]
    ExplainerFailure { row: usize, message: String },

    #[error("{m} features exceed the exact Shapley limit of {max}")]
    TooManyFeatures { m: usize, max: usize },

    #[error("design matrix is rank deficient even with ridge fallback")]
    RankDeficient,

    #[error("all perturbation weights vanished (kernel width too small for this point)")]
    DegenerateWeights,

    #[error("all predictions are equal; binning is impossible")]
    AllPredictionsEqual,

    #[error("class {label} has {count} members, too few for the requested fraction")]
    ClassTooSmall { label: usize, count: usize },

    #[error("{path}: parse error at line {line}, column {column}: {token:?}")]
    ParseError {
        path: PathBuf,
        line: usize,
        column: usize,
        token: String,
    },

    #[error("{0}: no data rows")]
    EmptyFile(PathBuf),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, EcfError>;
