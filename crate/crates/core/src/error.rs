use bbf_autodiff::TensorError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("environment: {0}")]
    Env(String),
    #[error("replay: {0}")]
    Replay(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("numeric fault at gradient step {step}: {detail}")]
    NumericFault { step: u64, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
