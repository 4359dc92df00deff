use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The integrator or the learner produced a non-finite or unphysical value.
    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    /// The request exceeds a configured cost guard.
    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
