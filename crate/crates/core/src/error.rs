use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("model is not admissible: {0}")]
    NotAdmissible(String),

    #[error("singular problem: {0}")]
    Singular(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("frequency {tau} exceeds the resolution cap {cap}")]
    ResolutionCap { tau: f64, cap: f64 },

    #[error("near-resonant denominator |N| = {0:e}")]
    NearResonance(f64),

    #[error("near-singular resolvent at tau = {tau}: sigma_min = {sigma_min:e}")]
    NearSingular { tau: f64, sigma_min: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
