use thiserror::Error;

use crate::rotation::FrameTag;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("derivative produced NaN at component {index} (t = {time})")]
    NanDerivative { index: usize, time: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("frame mismatch: expected {expected:?}, got {found:?}")]
    FrameMismatch { expected: FrameTag, found: FrameTag },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integration unstable at t = {time}: {reason}\nstate dump: {state}")]
    Unstable {
        time: f64,
        reason: String,
        state: String,
    },

    #[error("no active contact")]
    NoContact,

    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("unknown column `{name}`; valid columns: {}", .valid.join(", "))]
    UnknownColumn { name: String, valid: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(label: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{label}: {values:?}")))
    }
}
