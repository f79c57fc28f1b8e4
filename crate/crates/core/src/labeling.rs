//! Ground-truth progress labels and stream segmentation.
//!
//! Progress is the fraction of completed steps, interpolated linearly inside
//! the step currently being executed and held constant across gaps between
//! steps. Distractor tasks share the first `n_r` steps of a demonstration and
//! plateau once those are done.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{bin_index, Frame, GroundTruthTurn, Progress, Snippet, TaskAnnotation};
use crate::scalar::Scalar;

/// How a frame stream is cut into snippets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SegmentationConfig<T: Scalar = f64> {
    pub snippet_seconds: T,
    #[serde(rename = "frames_per_snippet")]
    pub frames_per_snippet: usize,
    pub fps: T,
}

impl<T: Scalar> SegmentationConfig<T> {
    /// 4 s snippets, 4 frames, 1 fps.
    pub fn alfred() -> Self {
        Self {
            snippet_seconds: T::lit(4.0),
            frames_per_snippet: 4,
            fps: T::lit(1.0),
        }
    }

    /// 2 s snippets, 4 frames, 2 fps.
    pub fn ego4d() -> Self {
        Self {
            snippet_seconds: T::lit(2.0),
            frames_per_snippet: 4,
            fps: T::lit(2.0),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.snippet_seconds.is_finite() && self.snippet_seconds > T::zero()) {
            return Err(ModelError::InvalidConfig(
                "segmentation.snippet_seconds must be positive".into(),
            ));
        }
        if self.frames_per_snippet == 0 {
            return Err(ModelError::InvalidConfig(
                "segmentation.frames_per_snippet must be positive".into(),
            ));
        }
        if !(self.fps.is_finite() && self.fps > T::zero()) {
            return Err(ModelError::InvalidConfig("segmentation.fps must be positive".into()));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for SegmentationConfig<T> {
    fn default() -> Self {
        Self::alfred()
    }
}

/// A distractor task sharing the first `n_r` of `n` steps with its host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistractorSpec {
    pub description: String,
    pub n_r: usize,
    pub n: usize,
}

impl DistractorSpec {
    pub fn new(description: impl Into<String>, n_r: usize, n: usize) -> Result<Self, ModelError> {
        if n_r > n {
            return Err(ModelError::InvalidConfig(format!(
                "distractor n_r ({n_r}) exceeds n ({n})"
            )));
        }
        Ok(Self {
            description: description.into(),
            n_r,
            n,
        })
    }

    /// Checks that the spec fits the annotation it is applied to.
    pub fn check<T: Scalar>(&self, a: &TaskAnnotation<T>) -> Result<(), ModelError> {
        if self.n != a.steps.len() || self.n_r > self.n {
            return Err(ModelError::DistractorMismatch {
                spec_n: self.n,
                actual: a.steps.len(),
            });
        }
        Ok(())
    }
}

/// Number of steps fully completed at `t`.
pub fn completed_steps<T: Scalar>(a: &TaskAnnotation<T>, t: T) -> usize {
    a.steps.partition_point(|s| s.t_end <= t)
}

/// Completed fraction in `[0, 1]` at `t` (before scaling to percent).
fn completed_fraction<T: Scalar>(a: &TaskAnnotation<T>, t: T) -> T {
    let n = a.steps.len();
    if n == 0 {
        return T::zero();
    }
    let k = completed_steps(a, t);
    if k == n {
        return T::one();
    }
    let nf = T::from_count(n);
    let held = T::from_count(k) / nf;
    let next = &a.steps[k];
    if t > next.t_start {
        // next.t_end > t > next.t_start, so the duration is non-zero
        let within = (t - next.t_start) / (next.t_end - next.t_start);
        held + within / nf
    } else {
        held
    }
}

/// Ground-truth progress of the original task at time `t`.
pub fn compute_progress_label<T: Scalar>(a: &TaskAnnotation<T>, t: T) -> Progress<T> {
    Progress::clamped(T::hundred() * completed_fraction(a, t))
}

/// Ground-truth progress of a distractor task at time `t`; it never exceeds
/// `100 * n_r / n`.
pub fn compute_distractor_label<T: Scalar>(
    a: &TaskAnnotation<T>,
    d: &DistractorSpec,
    t: T,
) -> Result<Progress<T>, ModelError> {
    d.check(a)?;
    let cap = T::from_count(d.n_r) / T::from_count(d.n);
    let f = completed_fraction(a, t);
    Ok(Progress::clamped(T::hundred() * cap.min(f)))
}

/// Label plus step counts at `t`, optionally for a distractor variant.
pub fn ground_truth_at<T: Scalar>(
    a: &TaskAnnotation<T>,
    d: Option<&DistractorSpec>,
    t: T,
) -> Result<GroundTruthTurn<T>, ModelError> {
    let p = match d {
        Some(d) => compute_distractor_label(a, d, t)?,
        None => compute_progress_label(a, t),
    };
    let n = a.steps.len();
    if n == 0 {
        return Err(ModelError::InvalidGroundTruth("annotation has no steps".into()));
    }
    GroundTruthTurn::new(p, n, bin_index(p, n))
}

/// Label of a snippet: the label at its last frame's timestamp.
pub fn label_snippet<T: Scalar>(
    a: &TaskAnnotation<T>,
    s: &Snippet<T>,
    d: Option<&DistractorSpec>,
) -> Result<Progress<T>, ModelError> {
    let t = s.last_timestamp();
    match d {
        Some(d) => compute_distractor_label(a, d, t),
        None => Ok(compute_progress_label(a, t)),
    }
}

/// Step indices by status at time `t`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepPartition {
    pub completed: Vec<usize>,
    pub in_progress: Option<usize>,
    pub pending: Vec<usize>,
}

/// Splits steps into completed / in-progress / pending at `t`. A step counts
/// as in progress only once `t` is strictly past its start.
pub fn partition_steps<T: Scalar>(a: &TaskAnnotation<T>, t: T) -> StepPartition {
    let n = a.steps.len();
    let k = completed_steps(a, t);
    let in_progress = (k < n && t > a.steps[k].t_start).then_some(k);
    let first_pending = if in_progress.is_some() { k + 1 } else { k };
    StepPartition {
        completed: (0..k).collect(),
        in_progress,
        pending: (first_pending..n).collect(),
    }
}

/// Cuts a timestamp-ordered frame stream into snippets of `cfg.snippet_seconds`.
///
/// The stream `[0, T_total]` (with `T_total` the last frame's timestamp) is
/// tiled by consecutive intervals; the first is closed, later ones are
/// `(a, b]`. Inside each interval the stream is resampled at `cfg.fps` by
/// nearest frame (ties to the earlier one), then K frames are picked
/// uniformly. Sparse intervals repeat their last frame.
pub fn segment_stream<T: Scalar>(
    manifest: &[Frame<T>],
    cfg: &SegmentationConfig<T>,
) -> Result<Vec<Snippet<T>>, ModelError> {
    cfg.validate()?;
    if manifest.is_empty() {
        return Err(ModelError::EmptyStream);
    }
    if manifest.windows(2).any(|w| w[1].timestamp < w[0].timestamp)
        || manifest.iter().any(|f| !f.timestamp.is_finite())
    {
        return Err(ModelError::InvalidSnippet(
            "manifest timestamps must be finite and non-decreasing".into(),
        ));
    }
    let tol = T::boundary_tolerance();
    let d = cfg.snippet_seconds;
    let total = manifest[manifest.len() - 1].timestamp.max(T::zero());
    let count = ((total / d) - tol).ceil().to_usize().unwrap_or(0).max(1);
    let k = cfg.frames_per_snippet;

    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let a = d * T::from_count(i);
        let b = if i + 1 == count {
            total
        } else {
            d * T::from_count(i + 1)
        };
        let lo = if i == 0 {
            0
        } else {
            manifest.partition_point(|f| f.timestamp <= a)
        };
        let hi = manifest.partition_point(|f| f.timestamp <= b);
        let candidates = &manifest[lo..hi.max(lo)];

        let mut padded = false;
        let available: Vec<&Frame<T>> = if candidates.is_empty() {
            padded = true;
            vec![&manifest[nearest(manifest, b)]]
        } else {
            let steps = ((b - a) * cfg.fps + tol).floor().to_usize().unwrap_or(0);
            let mut targets: Vec<T> = (1..=steps)
                .map(|j| a + T::from_count(j) / cfg.fps)
                .collect();
            if targets.is_empty() {
                targets.push(b);
            }
            let mut picked: Vec<usize> = targets.into_iter().map(|t| nearest(candidates, t)).collect();
            picked.dedup();
            picked.into_iter().map(|i| &candidates[i]).collect()
        };

        let frames = select_uniform(&available, k, &mut padded);
        out.push(Snippet {
            index: i + 1,
            frames,
            t_begin: a,
            t_end: b,
            short_tail: b - a < d - tol,
            padded,
        });
    }
    Ok(out)
}

/// Index of the frame nearest to `t` in a sorted, non-empty slice; ties go
/// to the earlier frame.
fn nearest<T: Scalar>(frames: &[Frame<T>], t: T) -> usize {
    let idx = frames.partition_point(|f| f.timestamp < t);
    if idx == 0 {
        return 0;
    }
    if idx == frames.len() {
        return frames.len() - 1;
    }
    if t - frames[idx - 1].timestamp <= frames[idx].timestamp - t {
        idx - 1
    } else {
        idx
    }
}

fn select_uniform<T: Scalar>(available: &[&Frame<T>], k: usize, padded: &mut bool) -> Vec<Frame<T>> {
    let len = available.len();
    if len >= k {
        if k == 1 {
            return vec![available[len - 1].clone()];
        }
        // round(i * (len - 1) / (k - 1)) in integers
        (0..k)
            .map(|i| {
                let idx = (2 * i * (len - 1) + (k - 1)) / (2 * (k - 1));
                available[idx].clone()
            })
            .collect()
    } else {
        *padded = true;
        let mut v: Vec<Frame<T>> = available.iter().map(|f| (*f).clone()).collect();
        let last = available[len - 1].clone();
        v.resize(k, last);
        v
    }
}

/// Evenly spaced synthetic frames over `[0, duration]`, for pipelines whose
/// backends never look at pixels.
pub fn synthetic_manifest<T: Scalar>(duration: T, fps: T, prefix: &str) -> Vec<Frame<T>> {
    let count = (duration * fps + T::boundary_tolerance())
        .floor()
        .to_usize()
        .unwrap_or(0);
    (0..=count)
        .map(|j| {
            let ts = T::from_count(j) / fps;
            Frame::from_uri(ts, format!("{prefix}/{j:06}"))
        })
        .collect()
}

/// One line of labeled-snippet output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSnippet {
    pub traj_id: String,
    pub turn: usize,
    pub t_begin: f64,
    pub t_end: f64,
    pub frames: Vec<String>,
    pub progress: f64,
}

/// Segments a stream and labels every snippet.
pub fn label_stream<T: Scalar>(
    traj_id: &str,
    a: &TaskAnnotation<T>,
    manifest: &[Frame<T>],
    cfg: &SegmentationConfig<T>,
    d: Option<&DistractorSpec>,
) -> Result<Vec<LabeledSnippet>, ModelError> {
    segment_stream(manifest, cfg)?
        .into_iter()
        .map(|s| {
            let p = label_snippet(a, &s, d)?;
            Ok(LabeledSnippet {
                traj_id: traj_id.to_string(),
                turn: s.index,
                t_begin: s.t_begin.as_f64(),
                t_end: s.t_end.as_f64(),
                frames: s.frames.iter().map(|f| f.payload.reference().to_string()).collect(),
                progress: p.value().as_f64(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Step;

    fn four_step() -> TaskAnnotation {
        TaskAnnotation::new(
            "t",
            "v",
            vec![
                Step::new("a", 0.0, 10.0),
                Step::new("b", 10.0, 20.0),
                Step::new("c", 20.0, 30.0),
                Step::new("d", 30.0, 40.0),
            ],
        )
    }

    fn manifest(seconds: u32, fps: u32) -> Vec<Frame> {
        (0..=seconds * fps)
            .map(|i| Frame::from_uri(i as f64 / fps as f64, format!("f{i}")))
            .collect()
    }

    #[test]
    fn progress_label_examples() {
        let a = four_step();
        assert_eq!(compute_progress_label(&a, 25.0).value(), 62.5);
        assert_eq!(compute_progress_label(&a, 0.0).value(), 0.0);
        assert_eq!(compute_progress_label(&a, 40.0).value(), 100.0);
        assert_eq!(compute_progress_label(&a, 55.0).value(), 100.0);
    }

    #[test]
    fn gap_holds_completed_fraction() {
        let a = TaskAnnotation::new("t", "v", vec![Step::new("a", 0.0, 10.0), Step::new("b", 15.0, 25.0)]);
        assert_eq!(compute_progress_label(&a, 12.0).value(), 50.0);
        assert_eq!(compute_progress_label(&a, 15.0).value(), 50.0);
    }

    #[test]
    fn label_before_first_step_is_zero() {
        let a = TaskAnnotation::new("t", "v", vec![Step::new("a", 5.0, 10.0)]);
        assert_eq!(compute_progress_label(&a, 3.0).value(), 0.0);
    }

    #[test]
    fn instant_step_completes_atomically() {
        let a: TaskAnnotation = TaskAnnotation::new(
            "t",
            "v",
            vec![Step::new("a", 0.0, 4.0), Step::new("b", 6.0, 6.0), Step::new("c", 6.0, 10.0)],
        );
        let third = 100.0 / 3.0;
        assert!((compute_progress_label(&a, 5.0).value() - third).abs() < 1e-12);
        assert!((compute_progress_label(&a, 6.0).value() - 2.0 * third).abs() < 1e-12);
        assert!(compute_progress_label(&a, 8.0).value().is_finite());
    }

    #[test]
    fn distractor_label_examples() {
        let a = four_step();
        let d = DistractorSpec::new("x", 2, 4).unwrap();
        assert_eq!(compute_distractor_label(&a, &d, 35.0).unwrap().value(), 50.0);
        assert_eq!(compute_distractor_label(&a, &d, 5.0).unwrap().value(), 12.5);
        let zero = DistractorSpec::new("x", 0, 4).unwrap();
        for t in [0.0, 7.0, 40.0] {
            assert_eq!(compute_distractor_label(&a, &zero, t).unwrap().value(), 0.0);
        }
        let wrong_n = DistractorSpec::new("x", 1, 3).unwrap();
        assert!(compute_distractor_label(&a, &wrong_n, 1.0).is_err());
        assert!(DistractorSpec::new("x", 5, 4).is_err());
    }

    #[test]
    fn ground_truth_counts() {
        let a = four_step();
        let gt = ground_truth_at(&a, None, 25.0).unwrap();
        assert_eq!((gt.n_gt, gt.m_gt), (4, 2));
        let d = DistractorSpec::new("x", 2, 4).unwrap();
        let gt = ground_truth_at(&a, Some(&d), 38.0).unwrap();
        assert_eq!((gt.p_gt.value(), gt.m_gt), (50.0, 2));
        assert!(ground_truth_at(&a, None, 40.0).unwrap().is_finished());
    }

    #[test]
    fn partition_at_boundaries() {
        let a = four_step();
        let p = partition_steps(&a, 20.0);
        assert_eq!(p.completed, vec![0, 1]);
        assert_eq!(p.in_progress, None);
        assert_eq!(p.pending, vec![2, 3]);
        let p = partition_steps(&a, 25.0);
        assert_eq!(p.in_progress, Some(2));
        assert_eq!(p.pending, vec![3]);
    }

    #[test]
    fn alfred_forty_seconds() {
        let s = segment_stream(&manifest(40, 1), &SegmentationConfig::alfred()).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.iter().all(|x| x.frames.len() == 4 && !x.padded && !x.short_tail));
        let ts: Vec<f64> = s[0].frames.iter().map(|f| f.timestamp).collect();
        assert_eq!(ts, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s[9].last_timestamp(), 40.0);
    }

    #[test]
    fn alfred_source_rate_independent() {
        let a = segment_stream(&manifest(40, 1), &SegmentationConfig::alfred()).unwrap();
        let b = segment_stream(&manifest(40, 5), &SegmentationConfig::alfred()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let tx: Vec<f64> = x.frames.iter().map(|f| f.timestamp).collect();
            let ty: Vec<f64> = y.frames.iter().map(|f| f.timestamp).collect();
            assert_eq!(tx, ty);
        }
    }

    #[test]
    fn short_tail_is_padded() {
        let s = segment_stream(&manifest(5, 1), &SegmentationConfig::alfred()).unwrap();
        assert_eq!(s.len(), 2);
        let tail = &s[1];
        assert_eq!((tail.t_begin, tail.t_end), (4.0, 5.0));
        assert!(tail.short_tail && tail.padded);
        assert_eq!(tail.frames.len(), 4);
        assert!(tail.frames.iter().all(|f| f.timestamp == 5.0));
    }

    #[test]
    fn ego4d_six_seconds() {
        let s = segment_stream(&manifest(6, 2), &SegmentationConfig::ego4d()).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|x| x.frames.len() == 4 && !x.padded));
        let ts: Vec<f64> = s[1].frames.iter().map(|f| f.timestamp).collect();
        assert_eq!(ts, vec![2.5, 3.0, 3.5, 4.0]);
    }

    #[test]
    fn nearest_frame_ties_go_earlier() {
        let frames = vec![Frame::from_uri(0.0, "a"), Frame::from_uri(2.0, "b")];
        assert_eq!(nearest(&frames, 1.0), 0);
        assert_eq!(nearest(&frames, 1.1), 1);
    }

    #[test]
    fn empty_stream_is_an_error() {
        let err = segment_stream::<f64>(&[], &SegmentationConfig::alfred()).unwrap_err();
        assert_eq!(err.to_string(), "empty stream");
    }

    #[test]
    fn single_frame_stream() {
        let s = segment_stream(&[Frame::from_uri(0.0, "a")], &SegmentationConfig::alfred()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].frames.len(), 4);
    }

    #[test]
    fn label_snippet_uses_last_frame() {
        let a = four_step();
        let segs = segment_stream(&manifest(40, 1), &SegmentationConfig::alfred()).unwrap();
        let ends: Vec<f64> = segs.iter().map(|s| label_snippet(&a, s, None).unwrap().value()).collect();
        assert_eq!(ends[9], 100.0);
        let mut snip = segs[6].clone();
        snip.frames.last_mut().unwrap().timestamp = 25.0;
        assert_eq!(label_snippet(&a, &snip, None).unwrap().value(), 62.5);
        snip.frames.last_mut().unwrap().timestamp = 35.0;
        let d = DistractorSpec::new("x", 2, 4).unwrap();
        assert_eq!(label_snippet(&a, &snip, Some(&d)).unwrap().value(), 50.0);
    }

    #[test]
    fn labeled_stream_lines() {
        let a = four_step();
        let out = label_stream("traj", &a, &manifest(40, 1), &SegmentationConfig::alfred(), None).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(out[0].frames, vec!["f1", "f2", "f3", "f4"]);
        assert_eq!(out[0].progress, 10.0);
    }

    #[test]
    fn synthetic_manifest_spans_duration() {
        let m: Vec<Frame> = synthetic_manifest(22.0, 2.0, "syn");
        assert_eq!(m.len(), 45);
        assert_eq!(m.last().unwrap().timestamp, 22.0);
        assert_eq!(segment_stream(&m, &SegmentationConfig::ego4d()).unwrap().len(), 11);
    }

    #[test]
    fn works_in_single_precision() {
        let a: TaskAnnotation<f32> = TaskAnnotation::new(
            "t",
            "v",
            vec![Step::new("a", 0.0f32, 10.0), Step::new("b", 10.0, 20.0)],
        );
        assert_eq!(compute_progress_label(&a, 15.0f32).value(), 75.0f32);
        let m: Vec<Frame<f32>> = synthetic_manifest(20.0f32, 1.0, "x");
        assert_eq!(segment_stream(&m, &SegmentationConfig::alfred()).unwrap().len(), 5);
    }
}
