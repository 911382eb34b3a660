//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the simulator and receiver algorithms.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    /// The regularized normal equations are numerically singular. Retry with a
    /// positive ridge factor.
    #[error("ill-conditioned least-squares system (pivot ratio {pivot_ratio:.3e}); retry with ridge > 0")]
    IllConditioned { pivot_ratio: f64 },

    /// The number of unknown taps is not smaller than the number of pilots.
    #[error("infeasible pilot plan: {unknowns} unknowns (L*M) for {pilots} pilots")]
    Infeasible { unknowns: usize, pilots: usize },

    #[error("composite delay of {delay_samples} samples exceeds the cyclic prefix ({n_cp} samples)")]
    DelayExceedsCp { delay_samples: usize, n_cp: usize },

    #[error("capacity exceeded: {needed} resource elements needed, {available} available")]
    CapacityExceeded { needed: usize, available: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors that come from bad configuration rather than a failed
    /// computation.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Infeasible { .. }
                | Error::DelayExceedsCp { .. }
                | Error::InvalidArgument(_)
                | Error::IndexOutOfRange { .. }
                | Error::DimensionMismatch { .. }
                | Error::NotPowerOfTwo(_)
                | Error::CapacityExceeded { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
