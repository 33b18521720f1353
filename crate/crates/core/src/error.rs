use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MopolError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MopolError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(String),

    /// A cell could not be read as a number. `row` is 1-based over data rows.
    #[error("missing or invalid value at row {row}, column '{column}': {detail}")]
    BadCell {
        row: usize,
        column: String,
        detail: String,
    },

    #[error("propensity at or below floor {floor} in rows {rows:?}")]
    PropensityFloor { floor: f64, rows: Vec<usize> },

    #[error("weights are not on the simplex: {0}")]
    OffSimplex(String),

    #[error("optimal tree search infeasible: {0}")]
    Infeasible(String),

    #[error("kernel matrix factorization failed after jitter {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl MopolError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MopolError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        MopolError::Invalid(msg.into())
    }
}
