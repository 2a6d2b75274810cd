//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by network ingestion, hazard evaluation, simulation and
/// model handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("partition parts out of range: {parts} for {nodes} nodes")]
    PartsOutOfRange { parts: usize, nodes: usize },

    #[error("fragility class not found: {0}")]
    MissingFragilityClass(String),

    #[error("unsupported spectral period {0} s (supported: 0.3 s, 1.0 s)")]
    UnsupportedPeriod(f64),

    #[error("too many uncertain edges for exact enumeration: {count} > {max}")]
    TooManyUncertainEdges { count: usize, max: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("infeasible synthetic network counts: {0}")]
    InfeasibleCounts(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
