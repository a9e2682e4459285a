use thiserror::Error;

/// Errors raised by the model, noise, scheme and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SisError {
    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("`{name}` = {value} is outside the domain: {constraint}")]
    Domain {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("malformed parameter document: {0}")]
    Document(String),

    #[error("{excluded} of {total} paths failed (budget is 1%); first failure on path {first_path}: {reason}")]
    FailureBudget {
        excluded: usize,
        total: usize,
        first_path: u64,
        reason: String,
    },

    #[error("wiener grid dump: {0}")]
    Dump(String),
}

pub type Result<T> = std::result::Result<T, SisError>;

pub(crate) fn finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(SisError::Domain {
            name,
            value,
            constraint: "must be finite",
        })
    }
}
