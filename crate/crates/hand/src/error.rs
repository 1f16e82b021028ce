use thiserror::Error;

#[derive(Debug, Error)]
pub enum HandError {
    #[error("joint angle out of limits: {joint} = {value} not in [{min}, {max}]")]
    AngleOutOfLimits {
        joint: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("hand projects outside the frame margin")]
    HandOutOfFrame,

    #[error("invalid generator config: {0}")]
    InvalidConfig(String),

    #[error("could not sample an in-frame motion script after {0} attempts")]
    RetriesExhausted(usize),

    #[error(transparent)]
    Event(#[from] evhand_event::EventError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HandError>;
