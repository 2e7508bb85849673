//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by construction, numeric, and training routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Two paired quantities disagree on dimension.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A value violates a domain constraint (sign, range, finiteness).
    #[error("domain error: {0}")]
    Domain(String),

    /// An argument is structurally invalid (counts, flags, ill-formed input).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The estimated reward vector is zero, so the closed-form step
    /// direction is undefined. Callers wanting "no update" must handle
    /// this case explicitly.
    #[error("degenerate direction: estimated reward vector is zero")]
    DegenerateDirection,

    /// Simplex projection clamped every entry of a block to zero.
    #[error("degenerate policy: all probability mass clamped to zero")]
    DegeneratePolicy,

    /// A training run left the numerically trustworthy region.
    #[error("training diverged at policy index {policy_index}: {detail}")]
    TrainingDiverged { policy_index: usize, detail: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
