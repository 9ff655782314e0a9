use thiserror::Error;

/// Errors raised by ring, scheme, and layer operations.
#[derive(Debug, Error)]
pub enum HeError {
    #[error("parameter error: {0}")]
    Params(String),

    /// An element was in the wrong domain (coefficient vs. evaluation).
    #[error("representation error: {0}")]
    Representation(String),

    #[error("level mismatch: {0}")]
    LevelMismatch(String),

    #[error("usage error: {0}")]
    Usage(String),

    /// The modulus chain has no level left for another rescale.
    #[error("multiplicative depth exhausted: {0}")]
    DepthExhausted(String),

    #[error("missing rotation key for step {0}")]
    MissingRotationKey(i32),

    #[error("encoding range exceeded: {0}")]
    EncodeRange(String),

    #[error("parameter fingerprint mismatch")]
    FingerprintMismatch,

    #[error("scale mismatch: {0}")]
    ScaleMismatch(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("shape error: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, HeError>;
