use std::path::PathBuf;

/// Errors produced anywhere in the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A derivative evaluation or accepted step produced NaN/Inf.
    #[error("integration failed at t = {t} s (step {step}): non-finite value in component {index}")]
    Integration { t: f64, step: usize, index: usize },

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("equilibrium search did not converge after {iterations} iterations (best residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("non-finite Jacobian entry in column for state coordinate x{coordinate}")]
    NonFiniteJacobian { coordinate: usize },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("empty rate window [{t0}, {t1}]")]
    EmptyWindow { t0: f64, t1: f64 },

    #[error("plot kind `{kind}` does not match a {result} result")]
    KindMismatch { kind: String, result: String },

    #[error("network run failed in {phase} phase at step {step}: {source}")]
    Network {
        phase: String,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { key: key.into(), reason: reason.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
