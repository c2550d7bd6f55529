use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Inputs violate a documented precondition (dimensions, time support, ranges).
    #[error("domain error: {0}")]
    Domain(String),
    /// A factorization failed or a matrix left the PSD cone beyond repair tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// No finite-cost assignment exists.
    #[error("assignment problem is infeasible")]
    Infeasible,
    /// Backward simulation could not produce a particle.
    #[error("smoothing failed at step {step}: {reason}")]
    Smoothing { step: usize, reason: String },
    /// Experiment configuration is invalid.
    #[error("config error: {0}")]
    Config(String),
    /// Exhaustive enumeration would exceed its hard cap.
    #[error("enumeration refused: {estimated} sets exceeds cap {cap}")]
    EnumerationCap { estimated: u64, cap: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn numerical(msg: impl Into<String>) -> Error {
    Error::Numerical(msg.into())
}
