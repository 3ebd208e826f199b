//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the bandit library.
#[derive(Debug, Error)]
pub enum BanditError {
    /// No closed-form expectation rule exists for this (feature map or
    /// kernel, distribution) pair; the caller should fall back to sampling.
    #[error("no closed-form expectation for this map/distribution pair; use sampled features")]
    UnsupportedExpectation,

    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A feature vector exceeded the unit-norm bound the confidence radii
    /// rely on. Inputs are rejected, never clipped.
    #[error("feature norm {norm:.6} exceeds bound {bound:.6}")]
    NormViolation { norm: f64, bound: f64 },

    /// A NaN or infinity showed up where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// A constructor argument is out of range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// `select` was called while a previous selection still awaits its
    /// observation.
    #[error("selection already pending; call observe first")]
    SelectionPending,

    /// `observe` was called without a pending selection.
    #[error("no pending selection to observe")]
    NoPendingSelection,

    /// A sample batch or action set was empty.
    #[error("empty {0}")]
    Empty(&'static str),

    /// The feature-set mode does not match the policy variant.
    #[error("feature set mode does not match the policy variant")]
    ModeMismatch,

    /// A numerical routine failed beyond the configured tolerances.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed input data (CSV distributions, group directories).
    #[error("{path}: {detail}")]
    Data { path: String, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl BanditError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        BanditError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn data(path: impl Into<String>, detail: impl Into<String>) -> Self {
        BanditError::Data {
            path: path.into(),
            detail: detail.into(),
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, BanditError>;
