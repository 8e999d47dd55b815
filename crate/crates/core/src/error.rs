use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("design matrix is rank deficient at column {column}")]
    RankDeficient { column: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("solver stalled after {iterations} iterations (objective {last_objective})")]
    Stalled {
        iterations: usize,
        last_objective: f64,
        beta: Vec<f64>,
        trace: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
