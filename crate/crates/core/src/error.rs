use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error at data row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("validation error{}: {message}", row.map(|r| format!(" at data row {r}")).unwrap_or_default())]
    Validation { row: Option<usize>, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular weighted Gram matrix even after ridge regularization")]
    Singular,

    #[error("degenerate fluctuation: {0}")]
    DegenerateFluctuation(String),

    #[error("unidentifiable nuisance: {0}")]
    Unidentifiable(String),

    #[error("raking calibration infeasible: {0}")]
    InfeasibleCalibration(String),

    #[error("raking calibration made no progress: {0}")]
    NoProgress(String),

    #[error("EIC representations disagree by {gap:e} at record {row}")]
    Consistency { row: usize, gap: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn validation(row: Option<usize>, message: impl Into<String>) -> Self {
        Error::Validation {
            row,
            message: message.into(),
        }
    }
}
