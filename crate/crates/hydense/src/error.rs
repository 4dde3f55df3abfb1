//! Crate-wide error type.

use std::fmt;
use std::io;

/// Alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by corpus loading, index construction, training and
/// persistence.
#[derive(Debug)]
pub enum Error {
    /// Underlying I/O failure, annotated with the path involved.
    Io { path: String, source: io::Error },
    /// A data file failed to parse; `line` is 1-based.
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    /// An identifier appeared more than once in its collection.
    DuplicateId { kind: &'static str, id: String },
    /// A function argument or configuration value violated its contract.
    InvalidArgument(String),
    /// An operation requiring non-empty input received an empty one.
    EmptyInput(&'static str),
    /// Dimensions or shapes of two operands disagree.
    ShapeMismatch(String),
    /// A NaN or infinity showed up where a finite value is required.
    NonFinite(&'static str),
    /// A binary file did not start with the expected magic bytes.
    MagicMismatch { expected: [u8; 4], found: [u8; 4] },
    /// A binary file carries an unsupported format version.
    VersionMismatch { expected: u32, found: u32 },
    /// A binary file ended before its declared content.
    Truncated(String),
    /// Two artifacts were built from different corpus versions.
    FingerprintMismatch,
    /// Configuration file rejected (unknown keys, bad types, bad values).
    Config(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "{path}: {source}"),
            Error::Parse {
                path,
                line,
                message,
            } => write!(f, "{path}:{line}: {message}"),
            Error::DuplicateId { kind, id } => write!(f, "duplicate {kind} id {id:?}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::MagicMismatch { expected, found } => write!(
                f,
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(expected),
                String::from_utf8_lossy(found)
            ),
            Error::VersionMismatch { expected, found } => {
                write!(f, "unsupported format version {found} (expected {expected})")
            }
            Error::Truncated(what) => write!(f, "truncated file: {what}"),
            Error::FingerprintMismatch => {
                write!(f, "indexes were built from different corpus versions")
            }
            Error::Config(msg) => write!(f, "config error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    /// Wrap an I/O error with the path it happened on.
    pub fn io(path: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by unusable input data rather than misuse of
    /// the API (used by the CLI to pick exit codes).
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::InvalidArgument(_))
    }
}
