use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside [{t0}, {t1}]")]
    OutOfRange { t: f64, t0: f64, t1: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("conditional variance {variance:e} at coordinate {index} is negative")]
    Covariance { index: usize, variance: f64 },

    #[error("empty nabla set for node {node} at t = {t} after regulation started")]
    EmptyNabla { node: usize, t: f64 },

    #[error("not supported: {0}")]
    NotSupported(String),

    #[error("invalid network spec:\n{0}")]
    Validation(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
