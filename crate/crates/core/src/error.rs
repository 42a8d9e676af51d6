use thiserror::Error;

/// Failures shared by every numerical module.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("derivative order {requested} exceeds supported maximum {max}")]
    UnsupportedOrder { requested: usize, max: usize },

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("no convergence: {0}")]
    NotConverged(String),

    #[error("eigenvalue not found: {0}")]
    NotFound(String),

    #[error("neutral eigenvalue rejected: Im c = {0:e}")]
    RejectedNeutral(f64),

    #[error("certificate failed: {0}")]
    CertificateFailed(String),

    #[error("inconsistent result: {0}")]
    Inconsistent(String),

    #[error("out of scope: {0}")]
    OutOfScope(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
