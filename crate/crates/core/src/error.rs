use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical blowup at t = {t}: {context}")]
    NumericalBlowup { t: f64, context: String },

    #[error("generation failed for {spec} at step {step}: {reason}")]
    Generation {
        spec: String,
        step: usize,
        reason: String,
    },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("estimate did not converge (drift {drift:.3e}): {context}")]
    NonConvergence { drift: f64, context: String },

    #[error("failed to load {}: {reason}", file.display())]
    Load { file: PathBuf, reason: String },

    #[error("ingestion failed: {0}")]
    Ingestion(String),

    #[error("scheduling error: {0}")]
    Scheduling(String),

    #[error("numerical error in layer {layer}: {context}")]
    Numerical { layer: usize, context: String },

    #[error("undefined horizon: {0}")]
    UndefinedHorizon(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("data leakage: {0}")]
    Leakage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Whether the error comes from bad user input rather than a runtime or
    /// numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Argument(_) | Error::Config { .. })
    }
}
