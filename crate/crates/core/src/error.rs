use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid STFT configuration: {0}")]
    InvalidConfig(String),
    #[error("empty signal")]
    EmptySignal,
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("channel index {index} out of range for {channels} channels")]
    ChannelOutOfRange { index: usize, channels: usize },
    #[error("overlap-add normalisation is zero at sample {0}; window/hop pair is not invertible")]
    NotInvertible(usize),
    #[error("mask kind {found:?} cannot be used here, expected {expected}")]
    MaskKind {
        found: crate::masks::MaskKind,
        expected: &'static str,
    },
    #[error("tap count must be at least 1")]
    InvalidTaps,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid direction of arrival {0} degrees")]
    InvalidDoa(f64),
    #[error("invalid array geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("{0}")]
    Metric(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
