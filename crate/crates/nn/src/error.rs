use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("data error at line {line}: {msg}")]
    Data { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Training needs both classes present.
    #[error("class balance error: {0}")]
    ClassBalance(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, NnError>;
