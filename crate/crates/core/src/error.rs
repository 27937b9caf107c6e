use thiserror::Error;

/// Errors produced by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polynomial degree: M must be at least 1")]
    InvalidDegree,

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("delay too small: tau = {tau} must exceed threshold * omega = {limit}")]
    DelayTooSmall { tau: f64, limit: f64 },

    #[error("adaptive quadrature failed to converge (max depth {max_depth}) on [{a}, {b}]")]
    QuadratureFailure { a: f64, b: f64, max_depth: usize },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("coefficient {name} returned a non-finite value at t = {t}{}", theta.map(|v| format!(", theta = {v}")).unwrap_or_default())]
    Assembly {
        name: String,
        t: f64,
        theta: Option<f64>,
    },

    #[error("fixed-point matrix I - U2 is numerically singular (condition estimate {cond:.3e})")]
    SingularFixedPoint { cond: f64 },

    #[error("eigenvalue solver failed: {0}")]
    Numeric(String),

    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("expression evaluation failed: {0}")]
    Eval(String),

    #[error("no sign change found within the bracket expansion budget")]
    NoBracket,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solution fixture required: {0}")]
    MissingFixture(String),

    #[error("malformed solution file: {0}")]
    Ingestion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
