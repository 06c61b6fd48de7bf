//! Error type shared across the pipeline.

use std::path::PathBuf;

/// Errors produced by parsing, validation, and pipeline stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed binary or text input. `offset` is the byte offset at which
    /// parsing failed, when known.
    #[error("parse error in {context} at byte {offset}: {message}")]
    Parse {
        context: String,
        offset: usize,
        message: String,
    },

    /// Input that is well-formed but violates a contract (bad config value,
    /// overlapping subject assignment, nonpositive divisor, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Sampling rates below 100 Hz are not supported by the peak detector.
    #[error("unsupported sampling rate: {0} Hz (minimum 100 Hz)")]
    UnsupportedRate(u32),

    /// Feature/weight dimensionality mismatch.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A non-finite value where a finite one is required. `row` identifies
    /// the offending training row when applicable.
    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },

    /// Downloaded or cached file does not match its expected checksum.
    #[error("checksum mismatch for {file}: expected {expected}, got {actual}")]
    ChecksumMismatch {
        file: String,
        expected: String,
        actual: String,
    },

    /// Network-level download failure, reported separately from checksum
    /// failures so callers can distinguish retryable errors.
    #[error("download failed for {url}: {message}")]
    Network { url: String, message: String },

    /// A stage was invoked before the stage that produces its input.
    #[error("missing artifact {path}: run the `{stage}` stage first")]
    MissingArtifact { stage: String, path: PathBuf },

    /// Artifacts from different configurations were mixed in one report.
    #[error("artifact hash mismatch: {0}")]
    HashMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(
        context: impl Into<String>,
        offset: usize,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            context: context.into(),
            offset,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
