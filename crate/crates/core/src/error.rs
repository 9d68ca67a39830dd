use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("placement saturated: placed {placed} of {target} particles after {attempts} failed attempts")]
    Saturation {
        placed: usize,
        target: usize,
        attempts: usize,
    },

    #[error("campaign failed: {skipped} of {total} samples skipped")]
    Campaign { skipped: usize, total: usize },

    #[error("overlapping particles: {0}")]
    Overlap(String),

    #[error("renormalization hypothesis violated: {0}")]
    Renormalization(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
