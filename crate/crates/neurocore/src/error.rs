use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NeuroError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value or gradient at node {node}")]
    Numeric { node: usize },
    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: usize },
    #[error("masked softmax has empty support")]
    EmptySupport,
    #[error("invalid batch: anchor {anchor} has no positive")]
    InvalidBatch { anchor: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
