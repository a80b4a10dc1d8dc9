use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value failed validation. `field` is a dotted path into
    /// the manifest (or the parameter name for library calls).
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}: {reason}")]
    Schema { path: String, reason: String },

    #[error("training diverged (seed {seed}, epoch {epoch}): {detail}")]
    Diverged { seed: u64, epoch: usize, detail: String },

    /// A fairness metric whose conditioning cells leave fewer than two groups.
    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("missing artifacts: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),

    #[error("manifest hash mismatch in {path}: expected {expected}, found {found}")]
    HashMismatch { path: PathBuf, expected: String, found: String },

    #[error("output directory {0} is locked by another command")]
    Locked(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::InvalidInput(_)
            | Error::Shape(_)
            | Error::Schema { .. }
            | Error::HashMismatch { .. } => 2,
            Error::MissingArtifacts(_) => 4,
            Error::Diverged { .. }
            | Error::Undefined(_)
            | Error::Numeric(_)
            | Error::Locked(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => 3,
        }
    }
}
