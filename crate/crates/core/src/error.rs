use thiserror::Error;

/// Errors produced by the codec, its file formats and its evaluators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error after {bytes_written} bytes: {source}")]
    Io {
        #[source]
        source: std::io::Error,
        bytes_written: u64,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} values, found {found}")]
    Length { expected: u64, found: u64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("mask error: {0}")]
    Mask(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no keypoint with visibility > 0 is available as an anchor")]
    AnchorUnavailable,

    #[error("undefined loss: {0}")]
    UndefinedLoss(String),

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(source: std::io::Error, bytes_written: u64) -> Self {
        Error::Io {
            source,
            bytes_written,
        }
    }

    /// True for errors caused by malformed or inconsistent input data
    /// (as opposed to I/O failures).
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
