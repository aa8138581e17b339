use std::path::PathBuf;

use thiserror::Error;

use crate::app::checkpoint::CheckpointError;
use crate::app::config::ConfigError;
use crate::datasets::CsvError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid {name}: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("chi2 divergent: 2/var_p - 1/var_q <= 0 in coordinate {coord}")]
    Chi2Divergent { coord: usize },

    #[error(transparent)]
    Csv(#[from] CsvError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input rather than by a computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::Empty(_)
                | Error::InvalidArgument { .. }
                | Error::Csv(_)
                | Error::Checkpoint(_)
                | Error::Config(_)
                | Error::Io { .. }
        )
    }
}
