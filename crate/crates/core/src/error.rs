use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by ingestion, fitting, simulation and evaluation.
#[derive(Debug, Error)]
pub enum GxeError {
    #[error("need at least {min} observations, got {got}")]
    TooFewObservations { min: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value at row {row}, column `{column}`")]
    NonFinite { row: usize, column: String },
    #[error("event indicator at row {row} must be 0 or 1")]
    InvalidEvent { row: usize },
    #[error("no events: all weights zero")]
    NoEvents,
    #[error("gene index {index} out of range (p = {p})")]
    GeneIndex { index: usize, p: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("solver diverged after {iterations} sweeps: {summary}")]
    Diverged { iterations: usize, summary: String },
    #[error("singular design for gene {gene}")]
    SingularDesign { gene: usize },
    #[error("covariance is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("censoring calibration failed: target {target} outside achievable range [{low}, {high}]")]
    Calibration { target: f64, low: f64, high: f64 },
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = GxeError> = std::result::Result<T, E>;
