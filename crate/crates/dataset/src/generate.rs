//! Text-model calls of the pipeline: distractor task descriptions and
//! training CoTs that must echo the provided progress.

use rand::Rng;
use stepwise_core::{parse_model_output, DistractorSpec, Progress, TaskAnnotation};
use stepwise_engine::{TextBackend, TextPurpose, TextRequest};

use crate::error::DatasetError;

pub const DISTRACTOR_PROMPT: &str = include_str!("../templates/distractor_prompt.txt");
pub const COT_PROMPT: &str = include_str!("../templates/cot_generation_prompt.txt");

/// Number of leading steps a distractor shares with its source task, drawn
/// uniformly from `[1, n - 1]`.
pub fn sample_shared_steps<R: Rng>(n: usize, rng: &mut R) -> Result<usize, DatasetError> {
    if n < 2 {
        return Err(DatasetError::GenerationFailed(format!(
            "a distractor needs at least 2 steps, task has {n}"
        )));
    }
    Ok(rng.random_range(1..n))
}

pub fn render_distractor_prompt(task: &str, initial_steps: &[String], objects: &[String]) -> String {
    let narrations: Vec<String> = initial_steps.iter().map(|s| format!("    {s}")).collect();
    DISTRACTOR_PROMPT
        .replace("{task_description}", task)
        .replace("{narrations}", &narrations.join("\n"))
        .replace("{objects}", &objects.join(", "))
}

/// Asks the backend for a distractor sharing the first `n_r` steps of `a`.
/// An empty reply is retried once.
pub async fn generate_distractor_with(
    a: &TaskAnnotation,
    objects: &[String],
    n_r: usize,
    backend: &dyn TextBackend,
) -> Result<DistractorSpec, DatasetError> {
    if objects.is_empty() {
        return Err(DatasetError::GenerationFailed("empty object list".into()));
    }
    let initial_steps: Vec<String> = a.steps[..n_r.min(a.steps.len())]
        .iter()
        .map(|s| s.description.clone())
        .collect();
    let req = TextRequest {
        prompt: render_distractor_prompt(&a.task, &initial_steps, objects),
        purpose: TextPurpose::Distractor {
            task: a.task.clone(),
            initial_steps,
            objects: objects.to_vec(),
        },
    };
    for _ in 0..2 {
        let reply = backend.complete_text(&req).await?;
        if let Some(line) = reply.lines().map(str::trim).find(|l| !l.is_empty()) {
            return Ok(DistractorSpec::new(line, n_r, a.steps.len())?);
        }
    }
    Err(DatasetError::GenerationFailed("empty distractor reply".into()))
}

/// Samples `n_r` and generates the distractor description.
pub async fn generate_distractor_task<R: Rng>(
    a: &TaskAnnotation,
    objects: &[String],
    backend: &dyn TextBackend,
    rng: &mut R,
) -> Result<DistractorSpec, DatasetError> {
    let n_r = sample_shared_steps(a.steps.len(), rng)?;
    generate_distractor_with(a, objects, n_r, backend).await
}

fn narration_block(items: &[String]) -> String {
    if items.is_empty() {
        "None".to_string()
    } else {
        items.join("\n")
    }
}

pub fn render_cot_prompt(task: &str, completed: &[String], uncompleted: &[String], progress: u8) -> String {
    COT_PROMPT
        .replace("{task_description_lower}", &task.trim().trim_end_matches('.').to_lowercase())
        .replace("{task_description}", task)
        .replace("{completed_narrations}", &narration_block(completed))
        .replace("{uncompleted_narrations}", &narration_block(uncompleted))
        .replace("{progress}", &progress.to_string())
}

/// Generates a training CoT and checks that its answer restates the rounded
/// label; a mismatch is retried once before the tuple is rejected.
pub async fn generate_training_cot(
    task: &str,
    completed: &[String],
    uncompleted: &[String],
    label: Progress,
    backend: &dyn TextBackend,
) -> Result<String, DatasetError> {
    let expected = label.round_half_up();
    let req = TextRequest {
        prompt: render_cot_prompt(task, completed, uncompleted, expected),
        purpose: TextPurpose::TrainingCot {
            task: task.to_string(),
            completed: completed.to_vec(),
            uncompleted: uncompleted.to_vec(),
            progress: expected,
        },
    };
    let mut got = String::new();
    for _ in 0..2 {
        let reply = backend.complete_text(&req).await?;
        match parse_model_output(&reply) {
            Ok(out) if out.progress == expected => return Ok(out.cot),
            Ok(out) => got = out.progress.to_string(),
            Err(f) => got = f.code().to_string(),
        }
    }
    Err(DatasetError::LabelMismatch { expected, got })
}
