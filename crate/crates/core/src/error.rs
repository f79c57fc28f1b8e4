use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("progress {0} outside [0, 100]")]
    ProgressOutOfRange(f64),
    #[error("invalid ground truth: {0}")]
    InvalidGroundTruth(String),
    #[error("invalid annotation: {}", join(.0))]
    InvalidAnnotation(Vec<Violation>),
    #[error("snippet has {actual} frames, expected {expected}")]
    FrameCount { expected: usize, actual: usize },
    #[error("invalid snippet: {0}")]
    InvalidSnippet(String),
    #[error("empty stream")]
    EmptyStream,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("distractor spec covers {spec_n} steps but the annotation has {actual}")]
    DistractorMismatch { spec_n: usize, actual: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("previous-turn values must be supplied together")]
    InconsistentHistory,
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
