use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, RtmError>;

#[derive(Debug, Error)]
pub enum RtmError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inadmissible link parameters: {0}")]
    InadmissibleLink(String),

    #[error("numeric fault: {0}")]
    Numeric(String),

    #[error("invalid model file: {0}")]
    InvalidModel(String),
}

impl RtmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RtmError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        RtmError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by the caller's inputs (files, flags) rather
    /// than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            RtmError::Io { .. }
                | RtmError::Parse { .. }
                | RtmError::InvalidCorpus(_)
                | RtmError::InvalidArgument(_)
                | RtmError::InvalidModel(_)
        )
    }
}
