//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, I/O, and the verifiers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("malformed network: {0}")]
    MalformedNetwork(String),

    #[error("unsupported model file version {found} (supported: {supported})")]
    UnsupportedVersion { found: u64, supported: u64 },

    #[error("malformed dimensions in model file: {0}")]
    MalformedDimensions(String),

    #[error("dataset error at line {line}: {reason}")]
    DatasetFormat { line: usize, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("verifier `{verifier}` does not support norm {norm}")]
    UnsupportedNorm { verifier: &'static str, norm: String },

    #[error("LP solver stalled after {iterations} pivots")]
    SolverStalled { iterations: usize },

    #[error("too many unstable neurons for exact enumeration: {count} > {limit}")]
    TooManyUnstable { count: usize, limit: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
