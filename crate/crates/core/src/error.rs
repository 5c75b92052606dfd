//! Error type shared by the agents, the harness and the command line.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WinneError {
    #[error(transparent)]
    Neuro(#[from] neurocore::NeuroError),
    #[error(transparent)]
    Env(#[from] envs::EnvError),
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("persistence: {0}")]
    Persist(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot summarise an empty record set")]
    EmptyTable,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl WinneError {
    /// Whether the error stems from user-supplied configuration rather than
    /// a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, WinneError::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, WinneError>;
