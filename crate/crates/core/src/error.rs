use thiserror::Error;

/// Errors produced across the toolbox.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of an operation (parameter outside
    /// the box, negative time, mismatched vector length, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Matrix or polynomial shapes that do not fit together.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Invalid configuration or file content.
    #[error("configuration error: {0}")]
    Config(String),

    /// The SDP backend broke down or returned an assignment that fails the
    /// post-solve residual check.
    #[error("solver failure: {0}")]
    Solver(String),

    /// A bisection or sweep was started from a bracket that does not satisfy
    /// its precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Gain reconstruction hit a singular or badly conditioned `X̃(ρ)`.
    #[error("singular scaling matrix at rho = {rho:?}: condition number {condition:e}")]
    Singular { rho: Vec<f64>, condition: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
