use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error(
        "matrix is not positive definite: pivot {pivot_index} is {pivot_value:e} \
         (diagonal max/min ratio {diag_ratio:e})"
    )]
    NotPositiveDefinite {
        pivot_index: usize,
        pivot_value: f64,
        diag_ratio: f64,
    },
    #[error("row {row} has sum {sum}, cannot normalize")]
    NonPositiveRowSum { row: usize, sum: f64 },
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no sessions left after {stage}")]
    EmptyDataset { stage: &'static str },
    #[error("split ratios {0:?} must be nonnegative and sum to 1")]
    InvalidRatios([f64; 3]),
    #[error("session {session} has length {len}, need at least {min}")]
    SessionTooShort { session: usize, len: usize, min: usize },
    #[error("session {session} has no items in the vocabulary")]
    EmptySession { session: usize },
    #[error("item index {index} out of range for vocabulary of size {n}")]
    ItemOutOfRange { index: usize, n: usize },
    #[error("duplicate token {0:?} in vocabulary")]
    DuplicateToken(String),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("teacher logit for item {item} at column {column} is not finite ({value})")]
    NonFiniteLogit { item: usize, column: usize, value: f64 },
    #[error("teacher returned {found} logits for item {item}, expected {expected}")]
    WrongLength {
        item: usize,
        expected: usize,
        found: usize,
    },
    #[error("teacher failed on item {item}: {message}")]
    Scorer { item: usize, message: String },
    #[error("smoothing must be positive when some transitions are unseen (got {0})")]
    InvalidSmoothing(f64),
    #[error("training data has no sessions")]
    EmptyTraining,
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported dtype flag {0}")]
    UnsupportedDtype(u8),
    #[error("unknown model kind tag {0}")]
    UnknownKind(u8),
    #[error("file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{extra} trailing bytes after payload")]
    TrailingBytes { extra: usize },
    #[error("checksum {found} does not match dimension {expected}")]
    Checksum { expected: u32, found: u32 },
    #[error("dimension {found} does not match vocabulary size {expected}")]
    VocabMismatch { expected: usize, found: usize },
    #[error("row {row} sums to {sum}, expected 1 within {tolerance}")]
    RowSum { row: usize, sum: f64, tolerance: f64 },
    #[error("entry ({row}, {col}) is {value}, expected a finite nonnegative value")]
    InvalidEntry { row: usize, col: usize, value: f64 },
    #[error("model payload contains a non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test set produced no scorable predictions")]
    EmptyTestSet,
    #[error("session prefix has no items in the vocabulary")]
    EmptyVector,
    #[error("cutoff list is empty or contains 0")]
    InvalidCutoffs,
    #[error("decay must be positive and finite, got {0}")]
    InvalidDecay(f64),
}

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
