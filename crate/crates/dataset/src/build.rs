//! Turn-by-turn dialogue construction, sharded output and run statistics.

use std::fs;
use std::io::Write;
use std::path::Path;

use futures::stream::{self, StreamExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stepwise_core::{
    ground_truth_at, partition_steps, segment_stream, DistractorSpec, Frame, SegmentationConfig,
    TaskAnnotation,
};
use stepwise_engine::{TextBackend, NO_HISTORY};

use crate::error::DatasetError;
use crate::generate::{generate_distractor_task, generate_training_cot};

pub const DEFAULT_SHARD_SIZE: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskVariant {
    Original,
    Distractor,
}

impl TaskVariant {
    fn as_str(self) -> &'static str {
        match self {
            TaskVariant::Original => "original",
            TaskVariant::Distractor => "distractor",
        }
    }
}

/// One training record: the snippet, its threaded history, the target CoT
/// and the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTuple {
    pub traj_id: String,
    pub turn: usize,
    /// Task text the dialogue is about (the distractor text for distractor variants).
    pub task: String,
    pub frames: Vec<String>,
    pub history_cot: String,
    pub target_cot: String,
    pub progress_label: f64,
    pub task_variant: TaskVariant,
    pub n: usize,
    pub m: usize,
}

/// A trajectory to build: its annotation, frames and scene objects.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryInput {
    pub annotation: TaskAnnotation,
    pub manifest: Vec<Frame>,
    pub objects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    pub seed: u64,
    /// Also emit one distractor variant per trajectory.
    pub distractor: bool,
    /// Trajectories in flight at once.
    pub parallelism: usize,
    pub shard_size: usize,
    /// Used when a record carries no object list.
    pub default_objects: Vec<String>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            distractor: false,
            parallelism: 8,
            shard_size: DEFAULT_SHARD_SIZE,
            default_objects: Vec::new(),
        }
    }
}

/// Counts over emitted dialogues; each variant of a trajectory counts as one
/// dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    pub trajectories: usize,
    pub tuples: usize,
    pub mean_turns: f64,
    pub rejects: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOutput {
    pub tuples: Vec<DialogueTuple>,
    pub stats: BuildStats,
    /// One line per rejected trajectory variant.
    pub rejections: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub shards: Vec<ShardInfo>,
    pub stats: BuildStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub tuples: usize,
}

/// Builds one variant's dialogue, threading each target CoT into the next
/// turn's history.
async fn build_variant(
    input: &TrajectoryInput,
    cfg: &SegmentationConfig,
    distractor: Option<&DistractorSpec>,
    backend: &dyn TextBackend,
) -> Result<Vec<DialogueTuple>, DatasetError> {
    let a = &input.annotation;
    let (task, variant) = match distractor {
        Some(d) => (d.description.clone(), TaskVariant::Distractor),
        None => (a.task.clone(), TaskVariant::Original),
    };
    let mut history = NO_HISTORY.to_string();
    let mut out = Vec::new();
    for snippet in segment_stream(&input.manifest, cfg)? {
        let t = snippet.last_timestamp();
        let gt = ground_truth_at(a, distractor, t)?;
        let (completed, uncompleted) = narrations(a, distractor, t);
        let target = generate_training_cot(&task, &completed, &uncompleted, gt.p_gt, backend).await?;
        out.push(DialogueTuple {
            traj_id: a.video_ref.clone(),
            turn: snippet.index,
            task: task.clone(),
            frames: snippet.frames.iter().map(|f| f.payload.reference().to_string()).collect(),
            history_cot: std::mem::replace(&mut history, target.clone()),
            target_cot: target,
            progress_label: gt.p_gt.value(),
            task_variant: variant,
            n: gt.n_gt,
            m: gt.m_gt,
        });
    }
    Ok(out)
}

/// Completed and uncompleted step narrations at `t`. A step still running
/// counts as uncompleted. For a distractor only the shared steps can be
/// completed; its own later steps appear as placeholders.
pub fn narrations(
    a: &TaskAnnotation,
    distractor: Option<&DistractorSpec>,
    t: f64,
) -> (Vec<String>, Vec<String>) {
    let shared = distractor.map_or(a.steps.len(), |d| d.n_r);
    let part = partition_steps(a, t);
    let desc = |i: &usize| a.steps[*i].description.clone();
    let completed = part.completed.iter().filter(|&&i| i < shared).map(desc).collect();
    let mut uncompleted: Vec<String> = part
        .in_progress
        .iter()
        .chain(&part.pending)
        .filter(|&&i| i < shared)
        .map(desc)
        .collect();
    if let Some(d) = distractor {
        uncompleted.extend((1..=d.n - d.n_r).map(|j| format!("Task-specific step {j} (not yet performed)")));
    }
    (completed, uncompleted)
}

struct TrajectoryResult {
    dialogues: Vec<Vec<DialogueTuple>>,
    rejections: Vec<String>,
}

async fn build_trajectory(
    index: usize,
    input: &TrajectoryInput,
    cfg: &SegmentationConfig,
    backend: &dyn TextBackend,
    options: &BuildOptions,
) -> TrajectoryResult {
    let id = &input.annotation.video_ref;
    let mut res = TrajectoryResult {
        dialogues: Vec::new(),
        rejections: Vec::new(),
    };
    let reject = |variant: TaskVariant, e: &DatasetError| format!("{id}\t{}\t{e}", variant.as_str());
    match build_variant(input, cfg, None, backend).await {
        Ok(d) => res.dialogues.push(d),
        Err(e) => res.rejections.push(reject(TaskVariant::Original, &e)),
    }
    if options.distractor && input.annotation.steps.len() >= 2 {
        let objects = if input.objects.is_empty() {
            &options.default_objects
        } else {
            &input.objects
        };
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(index as u64);
        let built = async {
            let d = generate_distractor_task(&input.annotation, objects, backend, &mut rng).await?;
            build_variant(input, cfg, Some(&d), backend).await
        };
        match built.await {
            Ok(d) => res.dialogues.push(d),
            Err(e) => res.rejections.push(reject(TaskVariant::Distractor, &e)),
        }
    }
    for r in &res.rejections {
        tracing::warn!(rejection = %r, "trajectory variant rejected");
    }
    res
}

/// Builds the dataset in memory. Trajectories run concurrently up to
/// `options.parallelism`; output order follows input order.
pub async fn build_dialogue_dataset(
    inputs: &[TrajectoryInput],
    cfg: &SegmentationConfig,
    backend: &dyn TextBackend,
    options: &BuildOptions,
) -> Result<BuildOutput, DatasetError> {
    cfg.validate()?;
    if options.parallelism == 0 || options.shard_size == 0 {
        return Err(DatasetError::Options("parallelism and shard_size must be positive".into()));
    }
    if inputs.is_empty() {
        return Err(DatasetError::NoAnnotations);
    }
    let results: Vec<TrajectoryResult> = stream::iter(inputs.iter().enumerate())
        .map(|(i, input)| build_trajectory(i, input, cfg, backend, options))
        .buffered(options.parallelism)
        .collect()
        .await;

    let mut tuples = Vec::new();
    let mut rejections = Vec::new();
    let mut dialogues = 0;
    for r in results {
        dialogues += r.dialogues.len();
        tuples.extend(r.dialogues.into_iter().flatten());
        rejections.extend(r.rejections);
    }
    if dialogues == 0 {
        return Err(DatasetError::AllFailed(rejections.len()));
    }
    let stats = BuildStats {
        trajectories: dialogues,
        tuples: tuples.len(),
        mean_turns: tuples.len() as f64 / dialogues as f64,
        rejects: rejections.len(),
    };
    Ok(BuildOutput {
        tuples,
        stats,
        rejections,
    })
}

/// Writes `tuples-NNNNN.jsonl` shards, `manifest.json`, `stats.json` and
/// `rejections.log` into `dir`.
pub fn write_dataset(
    dir: &Path,
    out: &BuildOutput,
    shard_size: usize,
) -> Result<DatasetManifest, DatasetError> {
    if shard_size == 0 {
        return Err(DatasetError::Options("shard_size must be positive".into()));
    }
    fs::create_dir_all(dir)?;
    let mut shards = Vec::new();
    for (i, chunk) in out.tuples.chunks(shard_size).enumerate() {
        let file = format!("tuples-{i:05}.jsonl");
        let mut w = std::io::BufWriter::new(fs::File::create(dir.join(&file))?);
        for t in chunk {
            serde_json::to_writer(&mut w, t).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        shards.push(ShardInfo {
            file,
            tuples: chunk.len(),
        });
    }
    let manifest = DatasetManifest {
        shards,
        stats: out.stats.clone(),
    };
    fs::write(dir.join("manifest.json"), to_pretty(&manifest))?;
    fs::write(dir.join("stats.json"), to_pretty(&out.stats))?;
    let mut log = out.rejections.join("\n");
    if !log.is_empty() {
        log.push('\n');
    }
    fs::write(dir.join("rejections.log"), log)?;
    Ok(manifest)
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}
