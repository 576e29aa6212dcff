//! Process exit codes.

use evstack::Error;

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const INTERNAL: u8 = 3;

/// Marks an error as a usage or configuration problem.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InvalidConfig { .. } => USAGE,
                Error::Io(_)
                | Error::Malformed { .. }
                | Error::CoordinateOutOfRange { .. }
                | Error::TimestampRegression { .. }
                | Error::DimensionMismatch { .. }
                | Error::Degenerate(_)
                | Error::Model(_) => DATA,
            };
        }
        if cause.is::<std::io::Error>() {
            return DATA;
        }
    }
    INTERNAL
}
