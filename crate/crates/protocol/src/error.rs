use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Structured parse failure; never a panic.
    #[error("malformed message: {0}")]
    Malformed(String),

    #[error("declared length {declared} exceeds the {max}-byte frame cap")]
    Oversize { declared: u64, max: u64 },

    #[error("unknown frame tag 0x{0:02x}")]
    UnknownTag(u8),

    #[error("parameter fingerprint mismatch")]
    Fingerprint,

    #[error("frame 0x{got:02x} not valid in session phase {phase}")]
    UnexpectedFrame { got: u8, phase: &'static str },

    /// The peer reported an error frame.
    #[error("peer error 0x{code:02x}: {message}")]
    Remote { code: u8, message: String },

    #[error(transparent)]
    Crypto(#[from] cryptotl_he::HeError),

    /// Offline mode: the needed response frame has not been produced yet.
    #[error("offline exchange pending: {0}")]
    Pending(String),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;
