use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature rule has {points} points per dimension, need at least {required}")]
    InsufficientQuadrature { points: usize, required: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("state has nonzero unresolved component (variable {variable}, mode {mode})")]
    UnresolvedSupport { variable: usize, mode: usize },

    #[error("split requested with no dimensions")]
    EmptySplit,

    #[error("integration failure in element {element} at t = {time}: non-finite state")]
    IntegrationFailure { element: u64, time: f64 },

    #[error("integration failure for Monte Carlo sample {sample} (xi = {xi:?}) at t = {time}")]
    SampleFailure { sample: u64, xi: Vec<f64>, time: f64 },

    #[error("refinement runaway: {elements} elements exceed the ceiling of {limit} at t = {time}")]
    RefinementRunaway { elements: usize, limit: usize, time: f64 },

    #[error("unsupported problem: {0}")]
    UnsupportedProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
