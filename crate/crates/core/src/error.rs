//! Error type shared across the crate.

use std::fmt;
use std::path::PathBuf;

/// Errors surfaced by data loading, checkpoint I/O, and training.
///
/// Contract violations on in-memory math (dimension mismatches, indices out
/// of range) panic instead; they indicate a caller bug, not bad input.
#[derive(Debug)]
pub enum PneError {
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// A line in an input file did not match the expected format.
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    /// An input file contained no usable records.
    EmptyInput { path: PathBuf },
    /// No user has enough interactions to hold one out for testing.
    NoEligibleUsers,
    /// Evaluation was requested on a dataset with an empty test set.
    EmptyTestSet,
    /// Two artifacts disagree on a dimension (e.g. checkpoint vs dataset).
    DimMismatch {
        context: String,
        expected: String,
        found: String,
    },
    /// A checkpoint file is truncated, has a bad magic, or bad dimensions.
    BadCheckpoint { path: PathBuf, message: String },
    /// A gradient or updated parameter became NaN/Inf in the named tensor.
    NonFinite { tensor: &'static str },
    /// An external key (user key, item key, word) is not known.
    UnknownKey { kind: &'static str, key: String },
}

impl fmt::Display for PneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PneError::Io { path, source } => {
                write!(f, "io error on {}: {}", path.display(), source)
            }
            PneError::Parse {
                path,
                line,
                message,
            } => write!(f, "{}:{}: {}", path.display(), line, message),
            PneError::EmptyInput { path } => {
                write!(f, "{}: no usable records", path.display())
            }
            PneError::NoEligibleUsers => {
                write!(f, "no user has >= 2 interactions; nothing to evaluate")
            }
            PneError::EmptyTestSet => write!(f, "test set is empty"),
            PneError::DimMismatch {
                context,
                expected,
                found,
            } => write!(f, "{}: expected {}, found {}", context, expected, found),
            PneError::BadCheckpoint { path, message } => {
                write!(f, "bad checkpoint {}: {}", path.display(), message)
            }
            PneError::NonFinite { tensor } => {
                write!(f, "non-finite value in tensor {}", tensor)
            }
            PneError::UnknownKey { kind, key } => write!(f, "unknown {}: {:?}", kind, key),
        }
    }
}

impl std::error::Error for PneError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            PneError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl PneError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PneError::Io {
            path: path.into(),
            source,
        }
    }
}
