//! Library surface of the operator binary, shared with its
//! integration tests: argument types, command implementations, key and
//! weight file handling.

pub mod args;
pub mod commands;
pub mod errors;
pub mod keyfiles;
pub mod weights_io;

pub use errors::CliError;

/// Default TCP port; CRYPTOTL_PORT overrides.
pub const DEFAULT_PORT: u16 = 7431;

pub fn env_port() -> u16 {
    std::env::var("CRYPTOTL_PORT")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_PORT)
}

pub fn env_max_frame() -> u64 {
    std::env::var("CRYPTOTL_MAX_FRAME")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(cryptotl_protocol::DEFAULT_MAX_FRAME)
}

pub type CliResult = Result<(), CliError>;
