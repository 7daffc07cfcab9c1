use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParam { field: String, message: String },

    #[error("infeasible scenario: {0}")]
    Infeasible(String),

    #[error("unknown scenario `{name}` (available presets: {available})")]
    UnknownScenario { name: String, available: String },

    #[error("span mismatch: predicted covers [{pred_start}, {pred_end}], truth covers [{true_start}, {true_end}]")]
    SpanMismatch {
        pred_start: f64,
        pred_end: f64,
        true_start: f64,
        true_end: f64,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("packet at t={t} arrives before previous packet at t={last}")]
    OutOfOrder { t: f64, last: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidParam {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
