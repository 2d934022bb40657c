use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("training error at {path}: {reason}")]
    Training { path: String, reason: String },

    #[error("generation error at diffusion step {step}: {reason}")]
    Generation { step: usize, reason: String },

    #[error("benchmark error: {0}")]
    Benchmark(String),

    #[error("capacity exhausted: {0}")]
    CapacityExhausted(String),

    #[error("statistics error: {0}")]
    Stats(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
