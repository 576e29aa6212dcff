use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    /// A record in an event file could not be parsed. `location` is a line
    /// number for CSV input and a byte offset for binary input.
    #[error("malformed record at {location}: {reason}")]
    Malformed { location: Location, reason: String },

    #[error("event at {location} has coordinate ({x}, {y}) outside {width}x{height} sensor")]
    CoordinateOutOfRange {
        location: Location,
        x: u64,
        y: u64,
        width: u32,
        height: u32,
    },

    #[error("timestamp regression at {location}: {t} us follows {previous} us")]
    TimestampRegression {
        location: Location,
        t: u64,
        previous: u64,
    },

    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    /// The grid has no usable background variance, so no SNR can be formed.
    #[error("degenerate grid: {0}")]
    Degenerate(String),

    #[error("invalid model file: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

/// Position of a record inside an event file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Offset(u64),
    /// Zero-based position in an in-memory event sequence.
    Index(usize),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Offset(o) => write!(f, "byte offset {o}"),
            Location::Index(i) => write!(f, "event #{i}"),
        }
    }
}
