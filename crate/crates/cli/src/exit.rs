//! Exit-code contract: 0 success, 1 validation, 2 data error.

use std::fmt;

use ctaug_core::Error;

pub const OK: u8 = 0;
pub const VALIDATION: u8 = 1;
pub const DATA: u8 = 2;

/// Marks a user or configuration mistake.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn core_code(e: &Error) -> u8 {
    match e {
        Error::InvalidSpec(_) | Error::InvalidArgument(_) | Error::Config(_) => VALIDATION,
        _ => DATA,
    }
}

/// Validation markers win; any other failure touching inputs is a data error.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Invalid>().is_some() {
            return VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return core_code(e);
        }
    }
    DATA
}
