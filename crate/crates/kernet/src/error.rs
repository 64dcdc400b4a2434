use thiserror::Error;

use crate::weights::{IsmState, WeightMatrix};

/// Payload attached to a fixed-point convergence failure: the best iterate
/// found so far, so callers can continue with degraded weights if they choose.
#[derive(Debug)]
pub struct ConvergenceFailure {
    pub weights: WeightMatrix,
    pub state: IsmState,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("convergence failure: {}", .0.message)]
    Convergence(Box<ConvergenceFailure>),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateInput(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
