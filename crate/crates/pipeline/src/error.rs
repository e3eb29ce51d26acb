use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    NotConverged(String),
    #[error("nothing selected: every model on the path is zero")]
    NothingSelected,
    #[error(transparent)]
    Protocol(#[from] fedgl_lqm::LqmError),
    #[error(transparent)]
    Core(#[from] fedgl_core::Error),
    #[error(transparent)]
    Genio(#[from] fedgl_genio::GenioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// Process exit code: 2 for bad input or configuration, 3 for
    /// non-convergence, 4 for protocol failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::NotConverged(_) => 3,
            PipelineError::Protocol(e) => match e {
                fedgl_lqm::LqmError::Core(_) => 2,
                _ => 4,
            },
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
