use thiserror::Error;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("contrast threshold must be positive, got {0}")]
    NonpositiveThreshold(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty histogram list")]
    EmptyList,

    #[error("oracle needs at least two frames, got {0}")]
    FewerThanTwoFrames(usize),

    #[error("invalid window: start {0} > end {1}")]
    InvalidWindow(u64, u64),

    #[error("event stream violates ordering or bounds: {0}")]
    InvalidStream(String),

    #[error("event file format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EventError>;
