use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model parameters or configuration values.
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("value out of range: {0}")]
    Range(String),

    /// Requested computation would exceed the configured memory cap.
    #[error("resource limit: {0}")]
    Resource(String),

    #[error("rejection sampler exceeded {iterations} iterations (acceptance so far {accepted}/{tried})")]
    RejectionCap {
        iterations: u64,
        accepted: u64,
        tried: u64,
    },

    #[error("annulus too small: {found} vertices, need at least {needed}")]
    AnnulusTooSmall { found: usize, needed: usize },

    /// An invariant check failed at run time.
    #[error("check failed: {0}")]
    Check(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
