//! Crate-wide error type.

use thiserror::Error;

/// Errors reported by kernels, oracles, experiments, and the MLP harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A hyperparameter is outside its admissible range.
    #[error("invalid hyperparameter {name}: {value} ({reason})")]
    InvalidHyperParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// Two buffers that must agree in length do not.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// An input contained a NaN or infinity.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The normalizing denominator reached exactly zero (only possible
    /// with `eps = 0` and an all-zero accumulator).
    #[error("zero denominator: eps = 0 and the normalizer accumulator is 0")]
    ZeroDenominator,

    /// A peak-update bound was requested that divides by `eps`.
    #[error("bound requires eps > 0")]
    BoundRequiresEps,

    /// A run was configured inconsistently (stepsize condition, horizon, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A data file did not parse as the expected format.
    #[error("data format error: {0}")]
    DataFormat(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
