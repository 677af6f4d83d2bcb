use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error)]
pub enum FhError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("degenerate height: {0}")]
    Degenerate(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("extrapolation diverged: {0}")]
    Extrapolation(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FhError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(FhError::Domain(msg.into()))
}

pub(crate) fn structural<T>(msg: impl Into<String>) -> Result<T> {
    Err(FhError::Structural(msg.into()))
}
