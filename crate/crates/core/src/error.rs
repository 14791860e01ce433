use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: String,
        left: usize,
        right: usize,
    },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("sample count mismatch: n_a = {n_a}, n_b = {n_b} (select the general estimator to allow unequal sizes)")]
    SampleCountMismatch { n_a: usize, n_b: usize },

    #[error("empty embedding set: {0}")]
    EmptySet(String),

    #[error("degenerate set: {0}")]
    DegenerateSet(String),

    #[error("format error in {path} at {position}: {message}")]
    Format {
        path: String,
        position: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing artifact for task `{task}`: {what}")]
    MissingArtifact { task: String, what: String },

    #[error("role error: expected {expected}, found {found}")]
    Role { expected: String, found: String },

    #[error("task mismatch: `{left}` vs `{right}`")]
    TaskMismatch { left: String, right: String },

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("unsupported metric direction: `{metric}` is lower-is-better")]
    UnsupportedMetricDirection { metric: String },

    #[error("degenerate series: {0} is constant")]
    DegenerateSeries(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(
        path: impl AsRef<std::path::Path>,
        position: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            position: position.into(),
            message: message.into(),
        }
    }
}
