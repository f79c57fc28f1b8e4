#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stepwise_core::{Step, TaskAnnotation};

/// Random well-formed annotation: positive step durations, gaps that are
/// either zero or positive.
pub fn random_annotation(rng: &mut ChaCha8Rng, max_steps: usize) -> TaskAnnotation {
    let n = rng.random_range(1..=max_steps);
    let mut t = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..5.0) };
    let mut steps = Vec::with_capacity(n);
    for i in 0..n {
        let dur = rng.random_range(0.1..20.0);
        steps.push(Step::new(format!("step {i}"), t, t + dur));
        t += dur;
        if rng.random_bool(0.5) {
            t += rng.random_range(0.0..10.0);
        }
    }
    TaskAnnotation::new("random task", "v", steps)
}

/// Label computed directly from the definition: completed steps over n,
/// plus the linear fraction of the step under way, held constant in gaps.
pub fn oracle_label(a: &TaskAnnotation, t: f64) -> f64 {
    let n = a.steps.len() as f64;
    let mut value = 0.0;
    for s in &a.steps {
        if t >= s.t_end {
            value += 1.0 / n;
        } else if t > s.t_start {
            value += (t - s.t_start) / (s.t_end - s.t_start) / n;
        }
    }
    100.0 * value
}
