use thiserror::Error;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine failed (factorisation, retry exhaustion, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Optimiser hit a non-finite gradient; carries the parameter name.
    #[error("non-finite gradient in parameter {param}")]
    NonFiniteGradient { param: String },

    /// Inconsistent internal state (stale indices, cache mismatch).
    #[error("internal error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}
