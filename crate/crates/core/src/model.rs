//! Domain value types: annotations, frames, snippets, progress and per-turn
//! ground truth.
//!
//! Everything here is an immutable value object. Annotations deserialize
//! without validation; call [`validate_annotation`] (or
//! [`TaskAnnotation::validated`]) before feeding one to the labeling code.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::scalar::Scalar;

/// One annotated step of a demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Step<T = f64> {
    #[serde(rename = "desc")]
    pub description: String,
    pub t_start: T,
    pub t_end: T,
}

impl<T: Scalar> Step<T> {
    pub fn new(description: impl Into<String>, t_start: T, t_end: T) -> Self {
        Self {
            description: description.into(),
            t_start,
            t_end,
        }
    }

    /// Zero-duration step; it completes atomically at `t_start`.
    pub fn is_instant(&self) -> bool {
        self.t_start == self.t_end
    }

    pub fn duration(&self) -> T {
        self.t_end - self.t_start
    }
}

/// A task description with its ordered, timestamped steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TaskAnnotation<T = f64> {
    pub task: String,
    #[serde(default)]
    pub video_ref: String,
    pub steps: Vec<Step<T>>,
}

impl<T: Scalar> TaskAnnotation<T> {
    pub fn new(task: impl Into<String>, video_ref: impl Into<String>, steps: Vec<Step<T>>) -> Self {
        Self {
            task: task.into(),
            video_ref: video_ref.into(),
            steps,
        }
    }

    /// Returns `self` if every invariant holds.
    pub fn validated(self) -> Result<Self, ModelError> {
        let violations = validate_annotation(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(ModelError::InvalidAnnotation(violations))
        }
    }

    /// Total number of steps `n`.
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// Timestamp at which the last step ends.
    pub fn end_time(&self) -> T {
        self.steps.last().map(|s| s.t_end).unwrap_or_else(T::zero)
    }

    /// Indices of zero-duration steps.
    pub fn instant_steps(&self) -> Vec<usize> {
        self.steps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_instant())
            .map(|(i, _)| i)
            .collect()
    }
}

/// A broken annotation invariant. Violations are data, not failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Offending field, e.g. `step 0` or `task`.
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks every annotation and step invariant. An empty result means the
/// annotation is well formed.
pub fn validate_annotation<T: Scalar>(a: &TaskAnnotation<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    if a.task.trim().is_empty() {
        out.push(Violation::new("task", "task description is empty"));
    }
    if a.steps.is_empty() {
        out.push(Violation::new("steps", "at least one step is required"));
    }
    for (i, s) in a.steps.iter().enumerate() {
        let field = format!("step {i}");
        if s.description.trim().is_empty() {
            out.push(Violation::new(&field, "description is empty"));
        }
        if !s.t_start.is_finite() || !s.t_end.is_finite() {
            out.push(Violation::new(&field, "timestamps must be finite"));
            continue;
        }
        if s.t_start < T::zero() {
            out.push(Violation::new(&field, "t_start < 0"));
        }
        if s.t_start > s.t_end {
            out.push(Violation::new(&field, "t_start > t_end"));
        }
    }
    for (i, pair) in a.steps.windows(2).enumerate() {
        let (cur, next) = (&pair[0], &pair[1]);
        if next.t_start < cur.t_start {
            out.push(Violation::new(
                format!("step {}", i + 1),
                format!("steps not sorted by t_start (step {} starts before step {i})", i + 1),
            ));
        } else if cur.t_end > next.t_start {
            out.push(Violation::new(
                format!("step {i}"),
                format!("overlaps step {} (t_end {} > t_start {})", i + 1, cur.t_end, next.t_start),
            ));
        }
    }
    out
}

/// Image payload. Never inspected outside the backend wire layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FramePayload {
    /// Base64-encoded image bytes.
    ImageB64(String),
    /// Resource locator (path or URL).
    Uri(String),
}

impl FramePayload {
    pub fn reference(&self) -> &str {
        match self {
            FramePayload::ImageB64(s) | FramePayload::Uri(s) => s,
        }
    }
}

fn default_media_type() -> String {
    "image/jpeg".to_string()
}

/// A timestamped video frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Frame<T = f64> {
    #[serde(rename = "ts")]
    pub timestamp: T,
    #[serde(flatten)]
    pub payload: FramePayload,
    #[serde(default = "default_media_type")]
    pub media_type: String,
}

impl<T: Scalar> Frame<T> {
    pub fn from_uri(timestamp: T, uri: impl Into<String>) -> Self {
        Self {
            timestamp,
            payload: FramePayload::Uri(uri.into()),
            media_type: default_media_type(),
        }
    }

    pub fn inline(timestamp: T, image_b64: impl Into<String>, media_type: impl Into<String>) -> Self {
        Self {
            timestamp,
            payload: FramePayload::ImageB64(image_b64.into()),
            media_type: media_type.into(),
        }
    }
}

/// K frames covering one interval of the stream; the unit of one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Snippet<T = f64> {
    /// Turn number, 1-based.
    pub index: usize,
    pub frames: Vec<Frame<T>>,
    pub t_begin: T,
    pub t_end: T,
    /// Final interval of a stream, shorter than the configured duration.
    #[serde(default)]
    pub short_tail: bool,
    /// Frames were duplicated (or borrowed from before the interval) to reach K.
    #[serde(default)]
    pub padded: bool,
}

impl<T: Scalar> Snippet<T> {
    /// Checks the frame-count and timestamp invariants against `k`.
    pub fn validate(&self, k: usize) -> Result<(), ModelError> {
        if self.frames.len() != k {
            return Err(ModelError::FrameCount {
                expected: k,
                actual: self.frames.len(),
            });
        }
        if self
            .frames
            .windows(2)
            .any(|w| w[1].timestamp < w[0].timestamp)
        {
            return Err(ModelError::InvalidSnippet("frame timestamps decrease".into()));
        }
        if self.t_end < self.t_begin {
            return Err(ModelError::InvalidSnippet("t_end < t_begin".into()));
        }
        if !self.padded
            && self
                .frames
                .iter()
                .any(|f| f.timestamp < self.t_begin || f.timestamp > self.t_end)
        {
            return Err(ModelError::InvalidSnippet(
                "frame timestamp outside [t_begin, t_end]".into(),
            ));
        }
        Ok(())
    }

    /// Timestamp of the last frame, which determines the snippet's label.
    pub fn last_timestamp(&self) -> T {
        self.frames.last().map(|f| f.timestamp).unwrap_or(self.t_end)
    }
}

/// Normalized task progress in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "f64", into = "f64")]
pub struct Progress<T: Scalar = f64>(T);

impl<T: Scalar> Progress<T> {
    pub fn new(value: T) -> Result<Self, ModelError> {
        if value.is_finite() && value >= T::zero() && value <= T::hundred() {
            Ok(Self(value))
        } else {
            Err(ModelError::ProgressOutOfRange(value.as_f64()))
        }
    }

    /// Clamps into `[0, 100]`; NaN maps to 0.
    pub fn clamped(value: T) -> Self {
        if value.is_nan() {
            return Self(T::zero());
        }
        Self(value.max(T::zero()).min(T::hundred()))
    }

    pub fn zero() -> Self {
        Self(T::zero())
    }

    pub fn complete() -> Self {
        Self(T::hundred())
    }

    pub fn value(self) -> T {
        self.0
    }

    /// Nearest integer, ties upward. This is the model-answer rounding rule.
    pub fn round_half_up(self) -> u8 {
        let r = (self.0 + T::lit(0.5)).floor();
        r.to_u8().unwrap_or(100).min(100)
    }

    pub fn from_percent(v: u8) -> Self {
        Self::clamped(T::from_count(v as usize))
    }
}

impl<T: Scalar> TryFrom<f64> for Progress<T> {
    type Error = ModelError;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Progress::new(T::lit(v))
    }
}

impl<T: Scalar> From<Progress<T>> for f64 {
    fn from(p: Progress<T>) -> f64 {
        p.0.as_f64()
    }
}

impl<T: Scalar> fmt::Display for Progress<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// Index of the progress bin containing `p` when the range is split into
/// `n` equal bins. `p == 100` maps to the dedicated completed bin `n`.
pub fn bin_index<T: Scalar>(p: Progress<T>, n: usize) -> usize {
    assert!(n >= 1, "bin_index requires n >= 1");
    let x = p.value() * T::from_count(n) / T::hundred();
    let b = (x + T::boundary_tolerance()).floor();
    b.to_usize().unwrap_or(0).min(n)
}

/// Ground truth for one turn: progress, total steps and completed steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "RawGroundTruth<T>")]
pub struct GroundTruthTurn<T: Scalar = f64> {
    pub p_gt: Progress<T>,
    pub n_gt: usize,
    pub m_gt: usize,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct RawGroundTruth<T: Scalar> {
    p_gt: Progress<T>,
    n_gt: usize,
    m_gt: usize,
}

impl<T: Scalar> TryFrom<RawGroundTruth<T>> for GroundTruthTurn<T> {
    type Error = ModelError;

    fn try_from(r: RawGroundTruth<T>) -> Result<Self, Self::Error> {
        GroundTruthTurn::new(r.p_gt, r.n_gt, r.m_gt)
    }
}

impl<T: Scalar> GroundTruthTurn<T> {
    /// Validates `m/n <= p/100 < (m+1)/n` (with `p == 100` iff `m == n`).
    pub fn new(p_gt: Progress<T>, n_gt: usize, m_gt: usize) -> Result<Self, ModelError> {
        if n_gt == 0 {
            return Err(ModelError::InvalidGroundTruth("n_gt must be >= 1".into()));
        }
        if m_gt > n_gt {
            return Err(ModelError::InvalidGroundTruth(format!(
                "m_gt ({m_gt}) exceeds n_gt ({n_gt})"
            )));
        }
        let b = bin_index(p_gt, n_gt);
        if b != m_gt {
            return Err(ModelError::InvalidGroundTruth(format!(
                "progress {p_gt} lies in bin {b}, inconsistent with {m_gt} of {n_gt} steps completed"
            )));
        }
        Ok(Self { p_gt, n_gt, m_gt })
    }

    pub fn is_finished(&self) -> bool {
        self.m_gt == self.n_gt
    }
}
