use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A constructed value violates one of its invariants.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    /// Curve CSV ingestion failure. `row` is 1-based and counts the header.
    #[error("curve parse error at row {row}: {reason}")]
    CurveParse { row: usize, reason: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported schema_version {found}, expected {expected}")]
    SchemaVersion { found: u64, expected: u64 },

    #[error("no applicable curve: {0}")]
    NoApplicableCurve(String),

    #[error("availability grid has {count} points, above the safety cap of {cap}")]
    GridTooLarge { count: usize, cap: usize },

    #[error("unknown workload `{0}`")]
    UnknownWorkload(String),

    #[error("duplicate workload `{0}`")]
    DuplicateWorkload(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}
