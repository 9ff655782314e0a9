//! Error-to-exit-code mapping: 2 usage, 3 data, 4 protocol, 5 crypto.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag combinations.
    Usage(String),
    /// Input file problems: malformed CSV, missing weights, bad shapes.
    Data(String),
    /// Transport and session failures, including pending offline rounds.
    Protocol(String),
    /// Scheme-level failures: depth exhausted, fingerprint mismatch.
    Crypto(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Protocol(_) => 4,
            CliError::Crypto(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Data(m) => write!(f, "{m}"),
            CliError::Protocol(m) => write!(f, "{m}"),
            CliError::Crypto(m) => write!(f, "{m}"),
        }
    }
}

impl From<cryptotl_nn::NnError> for CliError {
    fn from(e: cryptotl_nn::NnError) -> Self {
        match e {
            cryptotl_nn::NnError::Config(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<cryptotl_he::HeError> for CliError {
    fn from(e: cryptotl_he::HeError) -> Self {
        CliError::Crypto(e.to_string())
    }
}

impl From<cryptotl_protocol::ProtocolError> for CliError {
    fn from(e: cryptotl_protocol::ProtocolError) -> Self {
        match e {
            cryptotl_protocol::ProtocolError::Crypto(he) => CliError::Crypto(he.to_string()),
            other => CliError::Protocol(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
