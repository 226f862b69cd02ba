//! Error types shared across the simulator.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration, reported with the offending field.
    #[error("config error: {0}")]
    Config(String),

    /// Caller violated an operation contract (e.g. unaligned address).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A percentile was requested from too few samples.
    #[error("insufficient samples for p{percentile}: need at least {needed}, got {got}")]
    InsufficientSamples {
        percentile: f64,
        needed: usize,
        got: usize,
    },

    /// Simulated RDMA protection fault (access outside a registered region).
    #[error("protection fault: {0}")]
    ProtectionFault(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
