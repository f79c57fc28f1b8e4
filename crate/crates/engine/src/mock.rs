//! Deterministic backends for tests, replays and dataset builds.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stepwise_core::{
    compute_distractor_label, compute_progress_label, partition_steps, render_output,
    DistractorSpec, Progress, TaskAnnotation,
};

use crate::backend::{
    BackendError, TextBackend, TextPurpose, TextRequest, TransportKind, VisionBackend,
};
use crate::prompt::BackendRequest;
use crate::status::parse_step_ledger;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub seed: u64,
    /// Half-width of the uniform noise added to the integer answer.
    pub noise_amplitude: f64,
    /// Probability that a reply is malformed.
    pub malformed_rate: f64,
    /// When false every call fails as if the backend were down.
    pub available: bool,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            noise_amplitude: 0.0,
            malformed_rate: 0.0,
            available: true,
        }
    }
}

/// Answers every prompt from an attached ground-truth annotation: the label
/// at the last frame's timestamp, rounded half up, with a step-status CoT.
#[derive(Debug)]
pub struct MockOracleBackend {
    annotation: Option<TaskAnnotation>,
    distractor: Option<DistractorSpec>,
    config: MockConfig,
    calls: AtomicU64,
}

impl MockOracleBackend {
    pub fn new(annotation: Option<TaskAnnotation>, config: MockConfig) -> Self {
        Self {
            annotation,
            distractor: None,
            config,
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_distractor(mut self, d: DistractorSpec) -> Self {
        self.distractor = Some(d);
        self
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    fn next_rng(&self) -> ChaCha8Rng {
        let call = self.calls.fetch_add(1, Ordering::Relaxed);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(call);
        rng
    }

    /// The exact label and CoT body the oracle would answer at time `t`.
    pub fn oracle_answer(&self, t: f64) -> (Progress, String) {
        let Some(a) = &self.annotation else {
            return (Progress::zero(), "No reference steps are known for this task.\nCompleted: None.\nIn progress: None.\nRemaining: None.".into());
        };
        let label = match &self.distractor {
            Some(d) => compute_distractor_label(a, d, t).unwrap_or_else(|_| compute_progress_label(a, t)),
            None => compute_progress_label(a, t),
        };
        (label, oracle_cot(a, self.distractor.as_ref(), t))
    }
}

fn clean(desc: &str) -> &str {
    desc.trim().trim_end_matches('.')
}

fn join_or_none(items: &[String]) -> String {
    if items.is_empty() {
        "None.".to_string()
    } else {
        format!("{}.", items.join("; "))
    }
}

/// Step-status CoT for an annotation (or its distractor variant) at `t`.
pub fn oracle_cot(a: &TaskAnnotation, d: Option<&DistractorSpec>, t: f64) -> String {
    let part = partition_steps(a, t);
    let n = a.steps.len();
    let desc = |i: usize| clean(&a.steps[i].description).to_string();
    let (task, shared, total) = match d {
        Some(d) => (d.description.as_str(), d.n_r, d.n),
        None => (a.task.as_str(), n, n),
    };
    let completed: Vec<String> = part.completed.iter().copied().filter(|&i| i < shared).map(desc).collect();
    let in_progress: Vec<String> = part.in_progress.filter(|&i| i < shared).map(desc).into_iter().collect();
    let mut remaining: Vec<String> = part.pending.iter().copied().filter(|&i| i < shared).map(desc).collect();
    if shared < total {
        remaining.push(format!("{} further steps specific to this task", total - shared));
    }
    format!(
        "Task: {task}\nCompleted: {}\nIn progress: {}\nRemaining: {}\nEstimate: {} of {} steps completed.",
        join_or_none(&completed),
        join_or_none(&in_progress),
        join_or_none(&remaining),
        completed.len(),
        total
    )
}

fn malformed(rng: &mut ChaCha8Rng, cot: &str, answer: u8) -> String {
    match rng.random_range(0..5) {
        0 => format!("<answer>{answer}</answer>"),
        1 => format!("<think>{cot}</think>"),
        2 => format!("<think>{cot}</think><answer>about {answer} percent</answer>"),
        3 => format!("<think>{cot}</think><answer>{}</answer>", 101 + u32::from(answer)),
        _ => format!("<think>{cot}</think><answer>{answer}</answer><answer>{answer}</answer>"),
    }
}

#[async_trait]
impl VisionBackend for MockOracleBackend {
    async fn complete(&self, req: &BackendRequest) -> Result<String, BackendError> {
        if !self.config.available {
            return Err(BackendError::new(TransportKind::Connection, "mock backend unavailable"));
        }
        let mut rng = self.next_rng();
        let t = req.frames.iter().map(|f| f.timestamp).fold(0.0, f64::max);
        let (label, cot) = self.oracle_answer(t);
        let mut answer = f64::from(label.round_half_up());
        if self.config.noise_amplitude > 0.0 {
            let eps = self.config.noise_amplitude;
            answer = (answer + rng.random_range(-eps..=eps)).round().clamp(0.0, 100.0);
        }
        let answer = answer as u8;
        if self.config.malformed_rate > 0.0 && rng.random_bool(self.config.malformed_rate.min(1.0)) {
            return Ok(malformed(&mut rng, &cot, answer));
        }
        Ok(render_output(&cot, answer))
    }

    async fn health(&self) -> Result<(), BackendError> {
        if self.config.available {
            Ok(())
        } else {
            Err(BackendError::new(TransportKind::Connection, "mock backend unavailable"))
        }
    }

    fn name(&self) -> &str {
        "mock"
    }
}

/// Deterministic text model: writes one-line distractor tasks, step-status
/// training CoTs that echo the requested progress, and JSON step ledgers.
#[derive(Debug, Default, Clone)]
pub struct MockTextBackend;

#[async_trait]
impl TextBackend for MockTextBackend {
    async fn complete_text(&self, req: &TextRequest) -> Result<String, BackendError> {
        Ok(match &req.purpose {
            TextPurpose::Distractor {
                task,
                initial_steps,
                objects,
            } => {
                let pick = initial_steps.len() % objects.len().max(1);
                let object = objects.get(pick).map_or("object", String::as_str);
                let base = task.trim().trim_end_matches('.');
                format!("{base}, then move the {object} to another place.")
            }
            TextPurpose::TrainingCot {
                task,
                completed,
                uncompleted,
                progress,
            } => {
                let done: Vec<String> = completed.iter().map(|s| clean(s).to_string()).collect();
                let todo: Vec<String> = uncompleted.iter().map(|s| clean(s).to_string()).collect();
                let total = done.len() + todo.len();
                let cot = format!(
                    "To determine the progress of the task \"{}\", let's analyze the video:\nCompleted: {}\nRemaining: {}\nEstimate: {} of {} steps completed, so the progress is about {}%.",
                    task.to_lowercase(),
                    join_or_none(&done),
                    join_or_none(&todo),
                    done.len(),
                    total,
                    progress
                );
                render_output(&cot, *progress)
            }
            TextPurpose::StepExtraction { cot } => {
                let l = parse_step_ledger(cot);
                serde_json::json!({
                    "completed": l.completed,
                    "in_progress": l.in_progress,
                    "pending": l.pending,
                })
                .to_string()
            }
        })
    }
}

/// Replays a fixed queue of replies; fails with `Unavailable` once drained.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<Result<String, BackendError>>>,
    requests: Mutex<Vec<BackendRequest>>,
    text_requests: Mutex<Vec<TextRequest>>,
}

impl ScriptedBackend {
    pub fn new<I>(replies: I) -> Self
    where
        I: IntoIterator<Item = Result<String, BackendError>>,
    {
        Self {
            replies: Mutex::new(replies.into_iter().collect()),
            ..Self::default()
        }
    }

    pub fn from_texts<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(replies.into_iter().map(|s| Ok(s.into())))
    }

    /// Vision requests seen so far.
    pub fn requests(&self) -> Vec<BackendRequest> {
        self.requests.lock().unwrap().clone()
    }

    /// Text requests seen so far.
    pub fn text_requests(&self) -> Vec<TextRequest> {
        self.text_requests.lock().unwrap().clone()
    }

    fn pop(&self) -> Result<String, BackendError> {
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(BackendError::new(TransportKind::Unavailable, "script exhausted")))
    }
}

#[async_trait]
impl VisionBackend for ScriptedBackend {
    async fn complete(&self, req: &BackendRequest) -> Result<String, BackendError> {
        self.requests.lock().unwrap().push(req.clone());
        self.pop()
    }

    async fn health(&self) -> Result<(), BackendError> {
        Ok(())
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

#[async_trait]
impl TextBackend for ScriptedBackend {
    async fn complete_text(&self, req: &TextRequest) -> Result<String, BackendError> {
        self.text_requests.lock().unwrap().push(req.clone());
        self.pop()
    }
}
