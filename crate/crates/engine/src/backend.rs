use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::BackendRequest;

/// Why a backend call failed to produce text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    Timeout,
    Status,
    Connection,
    Decode,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("backend {kind:?} error: {message}")]
pub struct BackendError {
    pub kind: TransportKind,
    /// HTTP status for `Status` errors.
    pub status: Option<u16>,
    pub message: String,
}

impl BackendError {
    pub fn new(kind: TransportKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            status: None,
            message: message.into(),
        }
    }

    pub fn status(code: u16, message: impl Into<String>) -> Self {
        Self {
            kind: TransportKind::Status,
            status: Some(code),
            message: message.into(),
        }
    }

    /// Worth another attempt: timeouts, dropped connections, 429 and 5xx.
    pub fn is_retryable(&self) -> bool {
        match self.kind {
            TransportKind::Timeout | TransportKind::Connection => true,
            TransportKind::Status => matches!(self.status, Some(429) | Some(500..=599)),
            TransportKind::Decode | TransportKind::Unavailable => false,
        }
    }
}

/// A vision-language model that answers progress prompts.
#[async_trait]
pub trait VisionBackend: Send + Sync {
    async fn complete(&self, req: &BackendRequest) -> Result<String, BackendError>;

    /// Cheap reachability probe.
    async fn health(&self) -> Result<(), BackendError>;

    fn name(&self) -> &str;
}

/// What a text-only request is for. Remote backends only look at the
/// prompt; oracle backends use the structured context instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextPurpose {
    Distractor {
        task: String,
        initial_steps: Vec<String>,
        objects: Vec<String>,
    },
    TrainingCot {
        task: String,
        completed: Vec<String>,
        uncompleted: Vec<String>,
        progress: u8,
    },
    StepExtraction {
        cot: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRequest {
    pub prompt: String,
    pub purpose: TextPurpose,
}

/// A text-only language model.
#[async_trait]
pub trait TextBackend: Send + Sync {
    async fn complete_text(&self, req: &TextRequest) -> Result<String, BackendError>;
}
