use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AlleError>;

/// Every failure the library can report.
///
/// Variants group into three families that the command-line frontend maps
/// onto exit codes: configuration/usage problems, I/O and file-format
/// problems, and numerical failures.
#[derive(Debug, Error)]
pub enum AlleError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate neighborhood at point {point}: weight normalizer is {sum:e}")]
    DegenerateNeighborhood { point: usize, sum: f64 },

    #[error("matrix is indefinite: smallest eigenvalue {min_eigenvalue:e}")]
    Indefinite { min_eigenvalue: f64 },

    #[error("only {found} eigenvalues above the null threshold, {requested} requested")]
    DisconnectedGraph { found: usize, requested: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

impl AlleError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        AlleError::InvalidArgument(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        AlleError::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AlleError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            AlleError::DegenerateNeighborhood { .. }
                | AlleError::Indefinite { .. }
                | AlleError::DisconnectedGraph { .. }
                | AlleError::NonFinite(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, AlleError::Io { .. })
    }
}
