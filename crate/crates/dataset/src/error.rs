use stepwise_core::ModelError;
use stepwise_engine::BackendError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no annotations")]
    NoAnnotations,
    #[error("unreadable source: {0}")]
    Source(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("generation_failed: {0}")]
    GenerationFailed(String),
    #[error("label mismatch: expected {expected}, got {got}")]
    LabelMismatch { expected: u8, got: String },
    #[error("every trajectory failed ({0} rejections)")]
    AllFailed(usize),
    #[error("invalid options: {0}")]
    Options(String),
}
