use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("malformed WAV header in {path}: {reason}")]
    MalformedWav { path: PathBuf, reason: String },

    #[error("unsupported WAV encoding in {path}: {reason}")]
    UnsupportedEncoding { path: PathBuf, reason: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("no voiced frames in pitch contour")]
    NoVoicedFrames,

    #[error("need at least 2 jointly voiced frames, found {0}")]
    TooFewVoicedFrames(usize),

    #[error("embedding flag mismatch: {0}")]
    FlagMismatch(&'static str),

    #[error("zero-norm embedding")]
    ZeroNorm,

    #[error("empty pairing")]
    EmptyPairing,

    #[error("degenerate corpus: {0}")]
    DegenerateCorpus(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Corpus {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable kind, used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "missing_file",
            Error::MalformedWav { .. } => "malformed_wav",
            Error::UnsupportedEncoding { .. } => "unsupported_encoding",
            Error::Io(_) => "io",
            Error::EmptyInput(_) => "empty_input",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NoVoicedFrames => "no_voiced_frames",
            Error::TooFewVoicedFrames(_) => "too_few_voiced_frames",
            Error::FlagMismatch(_) => "flag_mismatch",
            Error::ZeroNorm => "zero_norm",
            Error::EmptyPairing => "empty_pairing",
            Error::DegenerateCorpus(_) => "degenerate_corpus",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::Json(_) => "json",
            Error::Corpus { source, .. } => source.kind(),
        }
    }

    pub(crate) fn dims(expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
