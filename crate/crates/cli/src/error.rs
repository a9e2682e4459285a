use std::fmt;

use sis_sde::SisError;

/// Failure classes, each with a fixed exit status.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Io(String),
    Engine(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Io(_) => 4,
            CliError::Engine(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Validation(m) => write!(f, "invalid configuration: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Engine(m) => write!(f, "engine failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<SisError> for CliError {
    fn from(e: SisError) -> Self {
        match e {
            SisError::FailureBudget { .. } => CliError::Engine(e.to_string()),
            SisError::Document(_) => CliError::Usage(e.to_string()),
            SisError::Dump(_) => CliError::Io(e.to_string()),
            SisError::InvalidParameter { .. } | SisError::Domain { .. } | SisError::Argument(_) => {
                CliError::Validation(e.to_string())
            }
        }
    }
}
