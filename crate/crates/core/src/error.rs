use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate doc_id {doc_id:?} on lines {first_line} and {second_line}")]
    DuplicateDocId {
        doc_id: String,
        first_line: usize,
        second_line: usize,
    },

    #[error("document {0:?} has no tokens")]
    NoTokens(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite score at position {0}")]
    NonFinite(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient {category} pool: need {needed}, have {available}")]
    InsufficientPool {
        category: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("no ranking for query {0:?}")]
    MissingRanking(String),

    #[error("unknown document {0:?}")]
    UnknownDocument(String),

    #[error("model file: {0}")]
    Format(String),

    #[error("{0}")]
    InvalidData(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::DuplicateDocId { .. }
            | Error::NoTokens(_)
            | Error::InsufficientPool { .. }
            | Error::MissingRanking(_)
            | Error::UnknownDocument(_)
            | Error::Format(_)
            | Error::InvalidData(_) => ErrorKind::Data,
            Error::DimensionMismatch { .. } | Error::NonFinite(_) => ErrorKind::Runtime,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
