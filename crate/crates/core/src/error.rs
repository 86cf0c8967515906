use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid beat model: {0}")]
    Model(String),

    #[error("recording too short: {0}")]
    TooShort(String),

    #[error("no carrier detected: {0}")]
    NoCarrier(String),

    #[error("no peaks found: {0}")]
    NoPeaks(String),

    #[error("insufficient beats: found {found}, need at least {needed}")]
    InsufficientBeats { found: usize, needed: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("incompatible model: {0}")]
    Incompatible(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by too little physiological signal rather
    /// than bad input or I/O.
    pub fn is_insufficient_data(&self) -> bool {
        matches!(
            self,
            Error::InsufficientBeats { .. }
                | Error::InsufficientData(_)
                | Error::NoPeaks(_)
                | Error::TooShort(_)
        )
    }
}
