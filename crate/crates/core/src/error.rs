use alloc::string::String;
use core::fmt;

/// Error type shared by all core modules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A vector or image dimension does not match what the operation expects.
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// An index is outside its valid range.
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    /// A configuration value violates its invariant.
    InvalidConfig(String),
    /// A serialized checkpoint failed validation at the named field.
    Checkpoint {
        field: &'static str,
        detail: String,
    },
    /// `step` was called on an environment whose episode already ended.
    EpisodeOver,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension {
                what,
                expected,
                got,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, got {got}"),
            Error::OutOfRange { what, index, len } => {
                write!(f, "{what} index {index} out of range (len {len})")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Checkpoint { field, detail } => {
                write!(f, "corrupt checkpoint at field `{field}`: {detail}")
            }
            Error::EpisodeOver => write!(f, "episode already ended; call reset before step"),
        }
    }
}

impl core::error::Error for Error {}
