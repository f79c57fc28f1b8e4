//! Numeric core for step-structured task progress estimation.
//!
//! Everything numeric is generic over a [`Scalar`] (`f32` or `f64`); the
//! generic types default to `f64`, and `*32` aliases below name the
//! single-precision instantiations.

pub mod error;
pub mod labeling;
pub mod metrics;
pub mod model;
pub mod output;
pub mod reward;
pub mod scalar;

pub use error::ModelError;
pub use labeling::{
    compute_distractor_label, compute_progress_label, ground_truth_at, label_snippet, label_stream,
    partition_steps, segment_stream, synthetic_manifest, DistractorSpec, LabeledSnippet,
    SegmentationConfig, StepPartition,
};
pub use metrics::{
    acc_metric, aggregate_report, bin_metric, delta_p_mae_metric, p_mae_metric, BenchmarkReport,
    EvalSettings, EvaluatedTrajectory, TrajectoryReport, TurnEvaluation,
};
pub use model::{
    bin_index, validate_annotation, Frame, FramePayload, GroundTruthTurn, Progress, Snippet, Step,
    TaskAnnotation, Violation,
};
pub use output::{parse_model_output, render_output, ParseFailure, ParsedOutput};
pub use reward::{
    bin_reward, finish_reward, format_reward, improvement_reward, improvement_reward_unclamped,
    mae_reward, overall_reward, RewardBreakdown, RewardConfig,
};
pub use scalar::Scalar;

pub type Progress32 = Progress<f32>;
pub type Step32 = Step<f32>;
pub type TaskAnnotation32 = TaskAnnotation<f32>;
pub type Frame32 = Frame<f32>;
pub type Snippet32 = Snippet<f32>;
pub type GroundTruthTurn32 = GroundTruthTurn<f32>;
pub type SegmentationConfig32 = SegmentationConfig<f32>;
pub type RewardConfig32 = RewardConfig<f32>;
pub type RewardBreakdown32 = RewardBreakdown<f32>;
pub type TurnEvaluation32 = TurnEvaluation<f32>;
pub type BenchmarkReport32 = BenchmarkReport<f32>;
