//! Error type shared across the toolkit.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to decode audio file {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("input too short: {0}")]
    TooShort(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("encoder unavailable: {0}")]
    EncoderUnavailable(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("checkpoint incompatible: {0}")]
    CheckpointMismatch(String),

    #[error("training aborted at step {step}: non-finite loss ({detail})")]
    NonFiniteLoss { step: u64, detail: String },

    #[error("vocoder command failed with status {status}: {command}")]
    VocoderCommand { command: String, status: i32 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    /// Process exit code classification used by the CLI:
    /// 2 validation, 3 runtime, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::ConfigMismatch(_)
            | Error::CheckpointMismatch(_)
            | Error::EmptyInput(_) => 2,
            Error::Io { .. } | Error::Json { .. } | Error::Decode { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
