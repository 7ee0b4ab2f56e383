use thiserror::Error;

/// Errors shared across all solver and construction paths.
#[derive(Debug, Error)]
pub enum SuffError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical failure: {what} (residual {residual:.3e})")]
    Numerical { what: String, residual: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("certificate invalid: {0}")]
    CertificateInvalid(String),
}

pub type Result<T> = std::result::Result<T, SuffError>;
