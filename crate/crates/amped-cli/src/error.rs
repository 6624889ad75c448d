//! CLI-level error type with the documented exit-code mapping.

use amped_core::CoreError;
use thiserror::Error;

/// Anything that can stop a run, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad scenario file, bad table file, or bad argument combination.
    /// Exits with code 2.
    #[error("{0}")]
    Validation(String),

    /// The scenario is well-formed but describes a generator outside the
    /// stable linear regime (or one whose stationary state is not unique).
    /// Exits with code 3.
    #[error("{0}")]
    Physics(String),

    /// Internal failure (I/O, linear algebra). Exits with code 1.
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Physics(_) => 3,
            CliError::Failure(_) => 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidInput(_) | CoreError::InconsistentAnchors(_) => {
                CliError::Validation(e.to_string())
            }
            CoreError::UnstableGenerator(_)
            | CoreError::DegenerateSteadyState(_)
            | CoreError::Integrator(_) => CliError::Physics(e.to_string()),
            CoreError::Linalg(_) => CliError::Failure(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(format!("i/o error: {e}"))
    }
}

pub fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}
