use citnet_signal::SignalError;
use citnet_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),

    /// Architecture settings that cannot be assembled (e.g. heads not dividing D).
    #[error("inconsistent architecture: {0}")]
    Architecture(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Signal(#[from] SignalError),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
