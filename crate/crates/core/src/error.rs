use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    /// Numerical integration did not reach the requested tolerance.
    /// `estimate` is the best value obtained.
    #[error("accuracy not reached: estimate {estimate} with error bound {error_bound} (requested {requested})")]
    Accuracy {
        estimate: f64,
        error_bound: f64,
        requested: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
