use thiserror::Error;

/// Errors raised by model construction and numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("not a covariance function: {0}")]
    NotCovariance(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of a computation on valid inputs, as opposed to
    /// rejected inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::NotCovariance(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
