use thiserror::Error;

/// Errors surfaced by measure construction, solvers, and data loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("shape mismatch: {context} (expected {expected}, got {got})")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("instance too large for {op}: {detail}")]
    InstanceTooLarge { op: &'static str, detail: String },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical failure in {op}: {detail}")]
    Numerical { op: &'static str, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
