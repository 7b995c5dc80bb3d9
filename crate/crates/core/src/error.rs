use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", path.display())]
    FileNotFound { path: PathBuf },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("bzip2 decompression failed at byte {offset}: {message}")]
    Decompression { offset: u64, message: String },

    #[error("malformed XML at byte {offset}{}: {message}", page.as_ref().map(|t| format!(" (in page {t:?})")).unwrap_or_default())]
    Xml {
        offset: u64,
        page: Option<String>,
        message: String,
    },

    #[error("lexicon key {key:?} maps to both {first:?} and {second:?}")]
    Collision {
        key: String,
        first: String,
        second: String,
    },

    #[error("matrix has no stored entries")]
    EmptyMatrix,

    #[error("rank {k} exceeds min(n_rows, n_cols) = {max}")]
    RankTooLarge { k: usize, max: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("models do not share the same article axis")]
    AxisMismatch,

    #[error("models are not ordered by consecutive k (found k={found} after k={previous})")]
    NonConsecutiveK { previous: usize, found: usize },

    #[error("k={k}: {source}")]
    Sweep {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data in {}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::NotFound {
            Error::FileNotFound { path }
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments or configuration.
    Usage,
    /// Missing, malformed or unsuitable input data.
    Data,
    Internal,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) => ErrorClass::Usage,
            Error::Sweep { source, .. } | Error::Stage { source, .. } => source.class(),
            Error::Io { .. } => ErrorClass::Internal,
            _ => ErrorClass::Data,
        }
    }
}
