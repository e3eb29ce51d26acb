use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("every call is missing")]
    AllMissing,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] fedgl_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GenioError>;
