use thiserror::Error;

#[derive(Debug, Error)]
pub enum DpError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("sign structure violated: {0}")]
    SignStructure(String),
    #[error("blow-up detected at step {step} (t = {t}): {reason}")]
    BlowUp { step: u64, t: f64, reason: String },
    #[error("tracking failed at t = {t}: {reason}")]
    Tracking { t: f64, reason: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DpError>;
