use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("zero pivot at row {index}")]
    Singular { index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("simulation of sequence {id} failed: {source}")]
    Simulation {
        id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("malformed file {path}: {detail}")]
    Malformed { path: PathBuf, detail: String },

    #[error("inconsistent parameter shape for {name}: {detail}")]
    Shape { name: String, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad user input rather than a numerical
    /// or runtime abort. The CLI maps these to exit code 1.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::Empty(_)
                | Error::OutOfRange(_)
                | Error::Version { .. }
                | Error::Malformed { .. }
                | Error::Shape { .. }
                | Error::Dimension { .. }
                | Error::Io { .. }
        )
    }
}
