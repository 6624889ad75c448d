//! Error type shared by the core modules.

use thiserror::Error;

/// Errors from model validation, linear algebra, and integration.
#[derive(Debug, Error)]
pub enum CoreError {
    /// An input failed a documented precondition (dimension mismatch,
    /// negative rate, non-Hermitian matrix, ...). The message names the
    /// offending quantity.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The rate set describes a generator outside the linear / below-lasing
    /// regime (an eigenvalue with positive real part): no stationary state
    /// of the master equation exists.
    #[error("outside linear/stable regime: {0}")]
    UnstableGenerator(String),

    /// The stationary state is not unique (degenerate null space).
    #[error("degenerate steady state: {0}")]
    DegenerateSteadyState(String),

    /// A dense linear-algebra routine failed to converge.
    #[error("linear algebra failure: {0}")]
    Linalg(String),

    /// The adaptive integrator underflowed its minimum step size.
    #[error("integrator failure: {0}")]
    Integrator(String),

    /// Calibration anchors cannot be met by a single amplitude scale.
    #[error("inconsistent calibration anchors: {0}")]
    InconsistentAnchors(String),
}

impl From<ndarray_linalg::error::LinalgError> for CoreError {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        CoreError::Linalg(e.to_string())
    }
}
