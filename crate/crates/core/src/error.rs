use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hyperrectangle: {0}")]
    InvalidRect(String),

    #[error("split point {point} on dimension {dim} is outside the open interval ({lo}, {hi})")]
    InvalidSplit { dim: usize, point: f64, lo: f64, hi: f64 },

    #[error("non-finite density evaluation ({value}) at {context}")]
    NonFiniteDensity { value: f64, context: String },

    #[error("no posterior mass located: root marginal likelihood estimate is zero")]
    NoPosteriorMass,

    #[error("cannot resample: all weights are zero")]
    ZeroWeights,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
