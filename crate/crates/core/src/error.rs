use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The request is well formed but outside the mathematical domain of the
    /// operation (e.g. an arrival rate outside the capacity region).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("arrival rate is an extreme point of the capacity region: {0}")]
    ExtremePoint(String),

    #[error("step budget exceeded: {requested} steps requested, limit {limit}")]
    StepBudget { requested: f64, limit: f64 },

    #[error("numeric failure after {iterations} iterations: {message}")]
    NumericFailure {
        message: String,
        iterations: usize,
        /// Best iterate reached before giving up.
        best: Vec<f64>,
        residual: f64,
    },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("weighted and transformed trajectories diverge at step {step} (discrepancy {discrepancy:e})")]
    WmwMismatch { step: usize, discrepancy: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
