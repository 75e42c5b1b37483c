//! Error types shared by the whole crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv schema error: missing column `{0}`")]
    CsvSchema(String),

    #[error("csv parse error at row {row}: {message}")]
    CsvParse { row: usize, message: String },

    #[error("duplicate observation for curve `{id}` at time {time}")]
    DuplicateObservation { id: String, time: f64 },

    #[error("invalid curve `{id}`: {message}")]
    InvalidCurve { id: String, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("curve `{0}` has no label but a labeled dataset is required")]
    MissingLabel(String),

    #[error("curve `{id}` has {have} observations, need at least {need}")]
    InsufficientObservations {
        id: String,
        have: usize,
        need: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("smoothing failed: {0}")]
    SmoothingFailure(String),

    #[error("covariance surface cannot be estimated: no curve has two or more observations")]
    CovarianceInestimable,

    #[error("degenerate covariance surface: no positive eigenvalues")]
    DegenerateCovariance,

    #[error("time {time} lies outside the model domain [{lo}, {hi}]")]
    Extrapolation { time: f64, lo: f64, hi: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("training data contains a single class")]
    DegenerateLabels,

    #[error("bootstrap replica {replica} failed after {attempts} attempts: {message}")]
    ReplicaFailure {
        replica: usize,
        attempts: usize,
        message: String,
    },

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("model file error: {0}")]
    ModelFormat(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
