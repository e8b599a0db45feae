use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The call is well-formed but cannot be served with the given inputs
    /// (empty sample sets, under-resolved balls, missing metadata).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("not in L1_sigma: exterior growth exponent {growth} >= sigma = {sigma}")]
    NotInL1Sigma { growth: f64, sigma: f64 },

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
