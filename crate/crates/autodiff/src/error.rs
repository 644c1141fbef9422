use thiserror::Error;

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: invalid argument: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("{op}: non-finite value produced")]
    NumericFault { op: &'static str },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("loss is not connected to any parameter")]
    DetachedTape,
    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("parameter `{0}` not found")]
    UnknownParameter(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        TensorError::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }
}
