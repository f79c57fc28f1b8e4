//! Benchmark metrics: absolute error, increment error, bin hit rate and
//! class-balanced completion accuracy.
//!
//! Aggregates pool all turns across trajectories, so longer trajectories
//! weigh more.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{bin_index, GroundTruthTurn, Progress};
use crate::reward::finish_reward;
use crate::scalar::{is_hundred, Scalar};

/// Inputs for scoring one turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TurnEvaluation<T: Scalar = f64> {
    pub p: Progress<T>,
    pub gt: GroundTruthTurn<T>,
    pub p_prev: Option<Progress<T>>,
    pub gt_prev: Option<Progress<T>>,
}

impl<T: Scalar> TurnEvaluation<T> {
    pub fn new(
        p: Progress<T>,
        gt: GroundTruthTurn<T>,
        p_prev: Option<Progress<T>>,
        gt_prev: Option<Progress<T>>,
    ) -> Result<Self, ModelError> {
        if p_prev.is_some() != gt_prev.is_some() {
            return Err(ModelError::InconsistentHistory);
        }
        Ok(Self {
            p,
            gt,
            p_prev,
            gt_prev,
        })
    }

    /// Builds evaluations for a whole trajectory, threading previous values.
    pub fn sequence(turns: &[(Progress<T>, GroundTruthTurn<T>)]) -> Vec<Self> {
        let mut prev: Option<(Progress<T>, Progress<T>)> = None;
        turns
            .iter()
            .map(|&(p, gt)| {
                let e = Self {
                    p,
                    gt,
                    p_prev: prev.map(|x| x.0),
                    gt_prev: prev.map(|x| x.1),
                };
                prev = Some((p, gt.p_gt));
                e
            })
            .collect()
    }
}

/// `|p - p_gt|`.
pub fn p_mae_metric<T: Scalar>(e: &TurnEvaluation<T>) -> T {
    (e.p.value() - e.gt.p_gt.value()).abs()
}

/// `|(p - p_prev) - (p_gt - gt_prev)|` with missing previous values taken as 0.
pub fn delta_p_mae_metric<T: Scalar>(e: &TurnEvaluation<T>) -> T {
    let pp = e.p_prev.map_or(T::zero(), Progress::value);
    let gp = e.gt_prev.map_or(T::zero(), Progress::value);
    ((e.p.value() - pp) - (e.gt.p_gt.value() - gp)).abs()
}

/// 1 iff the prediction lands in the ground-truth bin.
pub fn bin_metric<T: Scalar>(e: &TurnEvaluation<T>) -> T {
    if bin_index(e.p, e.gt.n_gt) == e.gt.m_gt {
        T::one()
    } else {
        T::zero()
    }
}

/// Class-balanced completion accuracy over `(p, p_gt)` pairs: the mean of
/// the per-class hit rates for finished and unfinished turns. Falls back to
/// the plain mean when only one class is present.
pub fn acc_metric<T: Scalar>(turns: &[(Progress<T>, Progress<T>)]) -> Result<T, ModelError> {
    if turns.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let mut hits = [T::zero(); 2];
    let mut counts = [0usize; 2];
    for &(p, p_gt) in turns {
        let class = usize::from(is_hundred(p_gt.value()));
        hits[class] = hits[class] + finish_reward(p, p_gt);
        counts[class] += 1;
    }
    if counts[0] == 0 || counts[1] == 0 {
        let total = hits[0] + hits[1];
        return Ok(total / T::from_count(turns.len()));
    }
    let rate = |c: usize| hits[c] / T::from_count(counts[c]);
    Ok((rate(0) + rate(1)) / T::lit(2.0))
}

/// The evaluation choices a report was produced under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Means are taken over all turns pooled across trajectories.
    pub pooling: String,
    /// Completion accuracy weighting.
    pub acc_weighting: String,
    /// Value assumed for the previous turn on a trajectory's first turn.
    pub first_turn_prev: f64,
    /// Tolerance for treating a ground-truth value as 100.
    pub completion_tolerance: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            pooling: "turn".into(),
            acc_weighting: "balanced".into(),
            first_turn_prev: 0.0,
            completion_tolerance: 1e-9,
        }
    }
}

/// Turns of one trajectory, identified for the per-trajectory breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvaluatedTrajectory<T: Scalar = f64> {
    pub id: String,
    pub turns: Vec<TurnEvaluation<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrajectoryReport<T: Scalar = f64> {
    pub id: String,
    pub turns: usize,
    pub p_mae: T,
    pub delta_p_mae: T,
    pub bin: T,
    pub acc: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BenchmarkReport<T: Scalar = f64> {
    pub p_mae: T,
    pub delta_p_mae: T,
    pub bin: T,
    pub acc: T,
    pub turn_count: usize,
    pub trajectory_count: usize,
    pub config_echo: EvalSettings,
    pub per_trajectory: Vec<TrajectoryReport<T>>,
}

#[derive(Clone, Copy)]
struct Sums<T> {
    p_mae: T,
    delta: T,
    bin: T,
    turns: usize,
}

impl<T: Scalar> Sums<T> {
    fn new() -> Self {
        Self {
            p_mae: T::zero(),
            delta: T::zero(),
            bin: T::zero(),
            turns: 0,
        }
    }

    fn add(&mut self, e: &TurnEvaluation<T>) {
        self.p_mae = self.p_mae + p_mae_metric(e);
        self.delta = self.delta + delta_p_mae_metric(e);
        self.bin = self.bin + bin_metric(e);
        self.turns += 1;
    }

    fn means(&self) -> (T, T, T) {
        let n = T::from_count(self.turns);
        (self.p_mae / n, self.delta / n, self.bin / n)
    }
}

/// Pools every turn of every trajectory into one report.
pub fn aggregate_report<T: Scalar>(
    trajectories: &[EvaluatedTrajectory<T>],
) -> Result<BenchmarkReport<T>, ModelError> {
    let mut total = Sums::new();
    let mut finish_pairs = Vec::new();
    let mut per_trajectory = Vec::new();
    for traj in trajectories.iter().filter(|t| !t.turns.is_empty()) {
        let mut sums = Sums::new();
        let pairs: Vec<_> = traj.turns.iter().map(|e| (e.p, e.gt.p_gt)).collect();
        for e in &traj.turns {
            sums.add(e);
            total.add(e);
        }
        let (p_mae, delta_p_mae, bin) = sums.means();
        per_trajectory.push(TrajectoryReport {
            id: traj.id.clone(),
            turns: sums.turns,
            p_mae,
            delta_p_mae,
            bin,
            acc: acc_metric(&pairs)?,
        });
        finish_pairs.extend(pairs);
    }
    if total.turns == 0 {
        return Err(ModelError::EmptyInput);
    }
    let (p_mae, delta_p_mae, bin) = total.means();
    Ok(BenchmarkReport {
        p_mae,
        delta_p_mae,
        bin,
        acc: acc_metric(&finish_pairs)?,
        turn_count: total.turns,
        trajectory_count: per_trajectory.len(),
        config_echo: EvalSettings::default(),
        per_trajectory,
    })
}

impl<T: Scalar> BenchmarkReport<T> {
    /// Plain-text table with columns p_mae, Δp_mae, bin, acc.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        s.push_str("| p_mae  | Δp_mae | bin   | acc   | turns | trajectories |\n");
        s.push_str("|--------|--------|-------|-------|-------|--------------|\n");
        s.push_str(&format!(
            "| {:<6.2} | {:<6.2} | {:<5.3} | {:<5.3} | {:<5} | {:<12} |\n",
            self.p_mae.as_f64(),
            self.delta_p_mae.as_f64(),
            self.bin.as_f64(),
            self.acc.as_f64(),
            self.turn_count,
            self.trajectory_count
        ));
        s
    }
}
