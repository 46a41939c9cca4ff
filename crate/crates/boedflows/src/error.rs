use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or combination.
    #[error("config error: {0}")]
    Config(String),

    /// A config file key failed to parse or is unknown.
    #[error("config key `{key}`: {reason}")]
    Parse { key: String, reason: String },

    /// Model-level failure (bad parameters, missing trajectory cache, ...).
    #[error("model error: {0}")]
    Model(String),

    /// EIG estimator failure (degenerate weights, non-finite likelihoods).
    #[error("estimator error: {0}")]
    Estimator(String),

    /// A particle update failed; carries the step index for diagnostics.
    #[error("flow step {step}: {detail}")]
    Flow { step: usize, detail: String },

    /// A numeric quantity that must be finite was not.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Extraction was asked to pick from an empty candidate set.
    #[error("empty candidate set")]
    EmptyCandidates,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
