use thiserror::Error;

/// Errors raised by the simulator and the verification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("capacity exceeded: {what} needs depth {depth}, budget allows {cap}")]
    Capacity { what: &'static str, depth: u32, cap: u32 },

    #[error("invalid depth {depth}: {reason}")]
    InvalidDepth { depth: u32, reason: &'static str },

    #[error("leaf stream out of dyadic order: expected index {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },

    #[error("too few trials: {got} (need at least {min})")]
    TooFewTrials { got: u64, min: u64 },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
