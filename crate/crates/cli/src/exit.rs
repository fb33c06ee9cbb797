//! Process exit codes.

use std::fmt;

pub const SUCCESS: i32 = 0;
pub const USAGE: i32 = 1;
pub const DATA: i32 = 2;
pub const NUMERICAL: i32 = 3;

/// An error caused by how the tool was invoked or configured.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Maps an error chain to an exit code. Anything not recognized as a usage
/// or numerical problem is treated as a data error.
pub fn code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<semgkit::Error>() {
            return match e {
                semgkit::Error::NumericalFault { .. } => NUMERICAL,
                semgkit::Error::InvalidConfig { .. } => USAGE,
                _ => DATA,
            };
        }
    }
    DATA
}
