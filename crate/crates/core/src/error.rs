use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: field `{field}`: {message}")]
    Record { line: usize, field: String, message: String },

    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },

    #[error("line {line}: duplicate sample_id `{sample_id}`")]
    DuplicateSampleId { line: usize, sample_id: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint was trained with config hash {expected}, current config hashes to {found} (use --force to override)")]
    ConfigMismatch { expected: String, found: String },

    #[error("training diverged at epoch {epoch}, sample `{sample_id}`: loss = {loss}")]
    Divergence { epoch: usize, sample_id: String, loss: f64 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier, used by the CLI error JSON and the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Record { .. } => "malformed_record",
            Error::Invalid { .. } => "invalid_argument",
            Error::DuplicateSampleId { .. } => "duplicate_sample_id",
            Error::Empty(_) => "empty_input",
            Error::Shape(_) => "shape_mismatch",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::ConfigMismatch { .. } => "config_mismatch",
            Error::Divergence { .. } => "divergence",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid { field: field.into(), message: message.into() }
    }
}
