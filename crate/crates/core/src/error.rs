use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),

    #[error("invalid solver configuration: {0}")]
    InvalidSolverConfig(String),

    #[error("invalid wake geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("Poisson solve did not converge after {iterations} sweeps (residual {residual:.3e})")]
    IterationLimitExceeded { iterations: usize, residual: f64 },

    #[error("numerical blowup at {stage} {index}: {detail}")]
    NumericalBlowup {
        stage: &'static str,
        index: usize,
        detail: String,
    },

    #[error("latent rollout diverged at step {step} (max |phi| = {magnitude:.3e})")]
    DivergenceDetected { step: usize, magnitude: f64 },

    #[error("sample at Re = {re}: {source}")]
    Sample {
        re: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index out of bounds: {0}")]
    IndexOutOfBounds(String),

    #[error("series too short: got {len}, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },

    #[error("all {count} runs failed; first failure: {first}")]
    AllFailed { count: usize, first: String },

    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than by a failed computation.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidGrid(_)
            | Error::InvalidParams(_)
            | Error::InvalidSolverConfig(_)
            | Error::InvalidGeometry(_)
            | Error::InvalidConfig(_)
            | Error::IndexOutOfBounds(_)
            | Error::SeriesTooShort { .. } => true,
            Error::Sample { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
