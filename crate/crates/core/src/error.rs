use std::path::PathBuf;

/// Errors raised while reading datasets from disk.
///
/// Each variant carries a stable [`DataError::code`] so callers (and the CLI
/// exit path) can tell the failure kinds apart without string matching.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("missing file: {}", path.display())]
    MissingFile { path: PathBuf },
    #[error("geometry mismatch in {context}: expected {expected}, found {found}")]
    Geometry {
        context: String,
        expected: String,
        found: String,
    },
    #[error("unknown label {label} in {context}")]
    UnknownLabel { label: i64, context: String },
    #[error("empty dataset: {0}")]
    Empty(String),
    #[error("malformed {context}: {message}")]
    Parse { context: String, message: String },
}

impl DataError {
    pub fn code(&self) -> &'static str {
        match self {
            DataError::MissingFile { .. } => "E-MISSING-FILE",
            DataError::Geometry { .. } => "E-GEOMETRY",
            DataError::UnknownLabel { .. } => "E-UNKNOWN-LABEL",
            DataError::Empty(_) => "E-EMPTY",
            DataError::Parse { .. } => "E-PARSE",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("unstable filter: {0}")]
    UnstableFilter(String),
    #[error("channel `{0}` not present")]
    MissingChannel(String),
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand used throughout for shape checks.
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
