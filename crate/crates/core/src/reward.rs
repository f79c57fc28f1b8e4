//! Per-turn rewards for multi-turn RL on progress estimation.
//!
//! All functions are pure. The overall reward is
//! `fmt * (bin * mae + alpha * imp + beta * fin)`, so a malformed answer
//! earns nothing and the fine-grained MAE term only pays inside a correct or
//! adjacent bin.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{bin_index, GroundTruthTurn, Progress};
use crate::output::parse_model_output;
use crate::scalar::{is_hundred, Scalar};

/// Reward hyperparameters. The defaults are implementation choices; reports
/// always echo the values in use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", default)]
pub struct RewardConfig<T: Scalar = f64> {
    /// MAE tolerance.
    pub delta1: T,
    /// Improvement scale.
    pub delta2: T,
    pub alpha: T,
    pub beta: T,
    pub imp_clip_lo: T,
    pub imp_clip_hi: T,
}

impl<T: Scalar> Default for RewardConfig<T> {
    fn default() -> Self {
        Self {
            delta1: T::lit(20.0),
            delta2: T::lit(20.0),
            alpha: T::lit(0.5),
            beta: T::lit(0.5),
            imp_clip_lo: T::lit(-1.0),
            imp_clip_hi: T::lit(0.8),
        }
    }
}

impl<T: Scalar> RewardConfig<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field: &str, rule: &str| {
            Err(ModelError::InvalidConfig(format!("reward.{field} {rule}")))
        };
        if !(self.delta1.is_finite() && self.delta1 > T::zero()) {
            return bad("delta1", "must be positive");
        }
        if !(self.delta2.is_finite() && self.delta2 > T::zero()) {
            return bad("delta2", "must be positive");
        }
        if !(self.alpha.is_finite() && self.alpha >= T::zero()) {
            return bad("alpha", "must be non-negative");
        }
        if !(self.beta.is_finite() && self.beta >= T::zero()) {
            return bad("beta", "must be non-negative");
        }
        if !(self.imp_clip_lo.is_finite() && self.imp_clip_lo < T::zero()) {
            return bad("imp_clip_lo", "must be negative");
        }
        if !(self.imp_clip_hi > T::zero() && self.imp_clip_hi.is_finite()) {
            return bad("imp_clip_hi", "must be positive");
        }
        Ok(())
    }

    /// Closed interval every overall reward falls into.
    pub fn overall_bounds(&self) -> (T, T) {
        (
            self.alpha * self.imp_clip_lo,
            T::one() + self.alpha * self.imp_clip_hi + self.beta,
        )
    }
}

/// The five components and their combination for one turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RewardBreakdown<T: Scalar = f64> {
    pub r_fmt: T,
    pub r_bin: T,
    pub r_mae: T,
    pub r_imp: T,
    pub r_fin: T,
    pub r_overall: T,
}

fn indicator<T: Scalar>(b: bool) -> T {
    if b {
        T::one()
    } else {
        T::zero()
    }
}

/// 1 iff `raw_output` is a well-formed answer.
pub fn format_reward<T: Scalar>(raw_output: &str) -> T {
    indicator(parse_model_output(raw_output).is_ok())
}

/// 1 for the correct bin, 0.25 for an existing adjacent bin, else 0.
pub fn bin_reward<T: Scalar>(p: Progress<T>, gt: &GroundTruthTurn<T>) -> T {
    let b = bin_index(p, gt.n_gt);
    let m = gt.m_gt;
    if b == m {
        T::one()
    } else if (m >= 1 && b == m - 1) || (m < gt.n_gt && b == m + 1) {
        T::lit(0.25)
    } else {
        T::zero()
    }
}

/// `max(1 - |p - p_gt| / delta1, 0)`.
pub fn mae_reward<T: Scalar>(p: Progress<T>, p_gt: Progress<T>, cfg: &RewardConfig<T>) -> T {
    (T::one() - (p.value() - p_gt.value()).abs() / cfg.delta1).max(T::zero())
}

/// Error reduction over the previous turn divided by `delta2`, before
/// clipping. Zero on the first turn.
pub fn improvement_reward_unclamped<T: Scalar>(
    p_t: Progress<T>,
    p_prev: Option<Progress<T>>,
    gt_t: Progress<T>,
    gt_prev: Option<Progress<T>>,
    cfg: &RewardConfig<T>,
) -> Result<T, ModelError> {
    match (p_prev, gt_prev) {
        (None, None) => Ok(T::zero()),
        (Some(pp), Some(gp)) => {
            let prev_err = (pp.value() - gp.value()).abs();
            let cur_err = (p_t.value() - gt_t.value()).abs();
            Ok((prev_err - cur_err) / cfg.delta2)
        }
        _ => Err(ModelError::InconsistentHistory),
    }
}

/// [`improvement_reward_unclamped`] clipped to `[imp_clip_lo, imp_clip_hi]`.
pub fn improvement_reward<T: Scalar>(
    p_t: Progress<T>,
    p_prev: Option<Progress<T>>,
    gt_t: Progress<T>,
    gt_prev: Option<Progress<T>>,
    cfg: &RewardConfig<T>,
) -> Result<T, ModelError> {
    let raw = improvement_reward_unclamped(p_t, p_prev, gt_t, gt_prev, cfg)?;
    Ok(raw.max(cfg.imp_clip_lo).min(cfg.imp_clip_hi))
}

/// 1 iff prediction and ground truth agree on whether the task is finished.
/// The prediction is compared to 100 exactly; the ground truth within
/// tolerance.
pub fn finish_reward<T: Scalar>(p: Progress<T>, p_gt: Progress<T>) -> T {
    indicator((p.value() == T::hundred()) == is_hundred(p_gt.value()))
}

/// Computes every component. With `raw_output == None` the caller vouches
/// for the format and `r_fmt` is 1.
pub fn overall_reward<T: Scalar>(
    raw_output: Option<&str>,
    p_t: Progress<T>,
    p_prev: Option<Progress<T>>,
    gt: &GroundTruthTurn<T>,
    gt_prev: Option<Progress<T>>,
    cfg: &RewardConfig<T>,
) -> Result<RewardBreakdown<T>, ModelError> {
    let r_fmt = raw_output.map_or(T::one(), format_reward);
    let r_bin = bin_reward(p_t, gt);
    let r_mae = mae_reward(p_t, gt.p_gt, cfg);
    let r_imp = improvement_reward(p_t, p_prev, gt.p_gt, gt_prev, cfg)?;
    let r_fin = finish_reward(p_t, gt.p_gt);
    let r_overall = r_fmt * (r_bin * r_mae + cfg.alpha * r_imp + cfg.beta * r_fin);
    Ok(RewardBreakdown {
        r_fmt,
        r_bin,
        r_mae,
        r_imp,
        r_fin,
        r_overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(v: f64) -> Progress {
        Progress::new(v).unwrap()
    }

    fn gt(v: f64, n: usize, m: usize) -> GroundTruthTurn {
        GroundTruthTurn::new(p(v), n, m).unwrap()
    }

    /// Literal branch evaluation of the bin reward cases, in rationals.
    fn bin_oracle(pv: u32, n: u32, m: u32) -> f64 {
        let inside = |lo: i64, hi: i64| (lo * 100) <= (pv * n) as i64 && ((pv * n) as i64) < hi * 100;
        let (m, n) = (m as i64, n as i64);
        // top bin [n/n, (n+1)/n) contains exactly p = 100
        if inside(m, m + 1) {
            1.0
        } else if (m >= 1 && inside(m - 1, m)) || (m < n && inside(m + 1, m + 2)) {
            0.25
        } else {
            0.0
        }
    }

    #[test]
    fn format_examples() {
        assert_eq!(format_reward::<f64>("<think>x</think><answer>42</answer>"), 1.0);
        assert_eq!(format_reward::<f64>("<answer>42</answer>"), 0.0);
        assert_eq!(format_reward::<f64>("<think>x</think><answer>150</answer>"), 0.0);
    }

    #[test]
    fn bin_examples() {
        assert_eq!(bin_reward(p(40.0), &gt(40.0, 3, 1)), 1.0);
        assert_eq!(bin_reward(p(70.0), &gt(40.0, 3, 1)), 0.25);
        assert_eq!(bin_reward(p(100.0), &gt(40.0, 3, 1)), 0.0);
        // adjacent bins outside [0, n] do not exist
        assert_eq!(bin_reward(p(100.0), &gt(100.0, 3, 3)), 1.0);
        assert_eq!(bin_reward(p(80.0), &gt(100.0, 3, 3)), 0.25);
        assert_eq!(bin_reward(p(10.0), &gt(0.0, 3, 0)), 1.0);
    }

    #[test]
    fn bin_reward_matches_oracle_exhaustively() {
        let mut mismatches = 0;
        for n in 1..=10u32 {
            for m in 0..=n {
                let p_gt = if m == n { 100.0 } else { 100.0 * m as f64 / n as f64 };
                let g = GroundTruthTurn::new(p(p_gt), n as usize, m as usize).unwrap();
                for pv in 0..=100u32 {
                    if bin_reward(p(pv as f64), &g) != bin_oracle(pv, n, m) {
                        mismatches += 1;
                    }
                }
            }
        }
        assert_eq!(mismatches, 0);
    }

    #[test]
    fn mae_examples() {
        let cfg = RewardConfig::default();
        assert_eq!(mae_reward(p(50.0), p(50.0), &cfg), 1.0);
        assert_eq!(mae_reward(p(55.0), p(50.0), &cfg), 0.75);
        assert_eq!(mae_reward(p(20.0), p(50.0), &cfg), 0.0);
    }

    #[test]
    fn improvement_examples() {
        let cfg = RewardConfig::default();
        let imp = |prev_err: f64, cur_err: f64| {
            improvement_reward(p(50.0 + cur_err), Some(p(50.0 + prev_err)), p(50.0), Some(p(50.0)), &cfg)
                .unwrap()
        };
        assert!((imp(10.0, 4.0) - 0.3).abs() < 1e-12);
        assert_eq!(imp(30.0, 2.0), 0.8);
        assert_eq!(imp(0.0, 30.0), -1.0);
        assert_eq!(improvement_reward(p(10.0), None, p(30.0), None, &cfg).unwrap(), 0.0);
        assert!(improvement_reward(p(10.0), Some(p(3.0)), p(30.0), None, &cfg).is_err());
    }

    #[test]
    fn finish_examples() {
        assert_eq!(finish_reward(p(100.0), p(100.0)), 1.0);
        assert_eq!(finish_reward(p(95.0), p(100.0)), 0.0);
        assert_eq!(finish_reward(p(50.0), p(60.0)), 1.0);
        assert_eq!(finish_reward(p(100.0), p(100.0 - 1e-12)), 1.0);
    }

    #[test]
    fn overall_examples() {
        let cfg = RewardConfig::default();
        // fmt=1, bin=1, mae=0.75, imp=0.3, fin=1
        let r = overall_reward(None, p(45.0), Some(p(51.0)), &gt(40.0, 3, 1), Some(p(40.0)), &cfg).unwrap();
        assert_eq!((r.r_fmt, r.r_bin, r.r_mae, r.r_fin), (1.0, 1.0, 0.75, 1.0));
        assert!((r.r_imp - 0.3).abs() < 1e-12);
        assert!((r.r_overall - 1.4).abs() < 1e-12);

        let bad = overall_reward(Some("nope"), p(44.0), None, &gt(40.0, 3, 1), None, &cfg).unwrap();
        assert_eq!(bad.r_fmt, 0.0);
        assert_eq!(bad.r_overall, 0.0);
        assert_eq!(bad.r_bin, 1.0);

        // fmt=1, bin=0, imp=-1, fin=0
        let r = overall_reward(None, p(100.0), Some(p(60.0)), &gt(60.0, 5, 3), Some(p(60.0)), &cfg).unwrap();
        assert_eq!((r.r_bin, r.r_imp, r.r_fin), (0.0, -1.0, 0.0));
        assert_eq!(r.r_overall, -0.5);
    }

    #[test]
    fn component_combination_example() {
        let cfg = RewardConfig::<f64>::default();
        let combine = |b: f64, m: f64, i: f64, f: f64| b * m + cfg.alpha * i + cfg.beta * f;
        assert!((combine(1.0, 0.75, 0.3, 1.0) - 1.4).abs() < 1e-12);
        assert_eq!(combine(0.0, 0.9, -1.0, 0.0), -0.5);
    }

    #[test]
    fn config_validation() {
        assert!(RewardConfig::<f64>::default().validate().is_ok());
        let cfg = RewardConfig { delta1: 0.0, ..RewardConfig::<f64>::default() };
        assert!(cfg.validate().unwrap_err().to_string().contains("reward.delta1"));
        let cfg = RewardConfig { imp_clip_lo: 0.5, ..RewardConfig::<f64>::default() };
        assert!(cfg.validate().is_err());
        assert_eq!(RewardConfig::<f64>::default().overall_bounds(), (-0.5, 1.9));
    }

    #[test]
    fn single_precision_rewards() {
        let cfg = RewardConfig::<f32>::default();
        let g = GroundTruthTurn::new(Progress::new(40.0f32).unwrap(), 3, 1).unwrap();
        let r = overall_reward(None, Progress::new(45.0f32).unwrap(), None, &g, None, &cfg).unwrap();
        assert_eq!(r.r_mae, 0.75);
        assert_eq!(r.r_overall, 0.75 + 0.5);
    }

    proptest! {
        #[test]
        fn mae_symmetric(a in 0.0f64..=100.0, b in 0.0f64..=100.0) {
            let cfg = RewardConfig::default();
            prop_assert_eq!(mae_reward(p(a), p(b), &cfg), mae_reward(p(b), p(a), &cfg));
        }

        #[test]
        fn improvement_numerator_antisymmetric(e1 in 0.0f64..=50.0, e2 in 0.0f64..=50.0) {
            let cfg = RewardConfig::default();
            let fwd = improvement_reward_unclamped(p(50.0 + e2), Some(p(50.0 + e1)), p(50.0), Some(p(50.0)), &cfg).unwrap();
            let rev = improvement_reward_unclamped(p(50.0 + e1), Some(p(50.0 + e2)), p(50.0), Some(p(50.0)), &cfg).unwrap();
            prop_assert!((fwd + rev).abs() < 1e-12);
        }

        #[test]
        fn closer_prediction_never_lowers_mae(gt_v in 0.0f64..=100.0, a in 0.0f64..=100.0, s in 0.0f64..=1.0) {
            let cfg = RewardConfig::default();
            let closer = gt_v + (a - gt_v) * s;
            prop_assert!(mae_reward(p(closer), p(gt_v), &cfg) >= mae_reward(p(a), p(gt_v), &cfg));
        }
    }
}
