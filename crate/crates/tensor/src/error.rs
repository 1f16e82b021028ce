use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch at {context}: {detail}")]
    ShapeMismatch { context: String, detail: String },

    #[error("non-finite value in node '{node}' at flat index {index}")]
    NonFinite { node: String, index: usize },

    #[error("data length {len} does not match shape {shape:?}")]
    LengthMismatch { len: usize, shape: Vec<usize> },

    #[error("loss node '{0}' is not scalar")]
    LossNotScalar(String),

    #[error("no binding provided for leaf '{0}'")]
    MissingBinding(String),

    #[error("unknown node name '{0}'")]
    UnknownNode(String),

    #[error("duplicate node name '{0}'")]
    DuplicateName(String),

    #[error("parameter '{0}' has no gradient")]
    MissingGrad(String),

    #[error("zero-norm input to node '{0}'")]
    ZeroNorm(String),

    #[error("invalid operation: {0}")]
    InvalidOp(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;
