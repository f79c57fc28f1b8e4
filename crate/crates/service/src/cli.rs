//! Command-line subcommands.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use stepwise_core::{
    aggregate_report, ground_truth_at, label_stream, segment_stream, BenchmarkReport,
    EvaluatedTrajectory, GroundTruthTurn, Progress, RewardConfig, SegmentationConfig,
    TurnEvaluation,
};
use stepwise_dataset::{
    build_dialogue_dataset, ingest_file, load_manifest, write_dataset, BuildOptions,
    IngestedAnnotation, ManifestSource, TrajectoryInput, DEFAULT_SHARD_SIZE,
};
use stepwise_engine::{
    MockConfig, MockOracleBackend, MockTextBackend, RemoteChatBackend, RemoteConfig, Session,
    SessionConfig, TextBackend, TurnRecord, DEFAULT_RETRY_BUDGET,
};

use crate::app::{router, score, AppState, ScoreRequest};
use crate::config::ServiceConfig;

/// A failure reported as one JSON line on stderr.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    pub exit: i32,
}

impl CliError {
    /// Bad input or configuration (exit status 2).
    pub fn input(code: &'static str, message: impl ToString) -> Self {
        Self {
            code,
            message: message.to_string(),
            exit: 2,
        }
    }

    /// Failure while running (exit status 1).
    pub fn runtime(code: &'static str, message: impl ToString) -> Self {
        Self {
            code,
            message: message.to_string(),
            exit: 1,
        }
    }

    pub fn to_json_line(&self) -> String {
        json!({"error": self.code, "message": self.message}).to_string()
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "stepwise", version, about = "Streamed task progress estimation with recurrent chain-of-thought")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment and label annotated streams into labeled-snippet JSONL.
    Label(LabelArgs),
    /// Build a threaded-CoT dialogue dataset.
    BuildDataset(BuildArgs),
    /// Score a prediction log against ground truth.
    Eval(EvalArgs),
    /// Run sessions end to end against the mock oracle backend.
    Replay(ReplayArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Compute one reward breakdown.
    RewardScore(RewardArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Alfred,
    Ego4d,
}

#[derive(Debug, Args)]
pub struct SegmentationArgs {
    /// Segmentation preset.
    #[arg(long, value_enum, default_value = "alfred")]
    preset: Preset,
    #[arg(long)]
    snippet_seconds: Option<f64>,
    #[arg(long)]
    frames_per_snippet: Option<usize>,
    #[arg(long)]
    fps: Option<f64>,
}

impl SegmentationArgs {
    fn config(&self) -> CliResult<SegmentationConfig> {
        let mut cfg = match self.preset {
            Preset::Alfred => SegmentationConfig::alfred(),
            Preset::Ego4d => SegmentationConfig::ego4d(),
        };
        if let Some(v) = self.snippet_seconds {
            cfg.snippet_seconds = v;
        }
        if let Some(v) = self.frames_per_snippet {
            cfg.frames_per_snippet = v;
        }
        if let Some(v) = self.fps {
            cfg.fps = v;
        }
        cfg.validate().map_err(|e| CliError::input("config", e))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Annotation JSONL, one trajectory per line.
    #[arg(long)]
    annotations: PathBuf,
    /// One frame manifest used for every annotation.
    #[arg(long, conflicts_with_all = ["manifest_dir", "synthesize_fps"])]
    manifest: Option<PathBuf>,
    /// Directory that `video_ref` manifest paths are relative to
    /// (default: the annotation file's directory).
    #[arg(long, conflicts_with = "synthesize_fps")]
    manifest_dir: Option<PathBuf>,
    /// Synthesize frame references at this rate instead of reading manifests.
    #[arg(long)]
    synthesize_fps: Option<f64>,
}

impl InputArgs {
    fn load(&self) -> CliResult<Vec<TrajectoryInput>> {
        let ingested = ingest_file(&self.annotations).map_err(|e| CliError::input("annotations", e))?;
        for r in &ingested.rejections {
            tracing::warn!(file = %self.annotations.display(), "{r}");
        }
        if ingested.annotations.is_empty() {
            return Err(CliError::input("annotations", "no valid annotations"));
        }
        let single = match &self.manifest {
            Some(p) => Some(load_manifest(p).map_err(|e| CliError::input("manifest", e))?),
            None => None,
        };
        let source = match (self.synthesize_fps, &self.manifest_dir) {
            (Some(fps), _) if !(fps.is_finite() && fps > 0.0) => {
                return Err(CliError::input("config", "synthesize_fps must be positive"))
            }
            (Some(fps), _) => ManifestSource::Synthetic { fps },
            (None, Some(dir)) => ManifestSource::Files(dir.clone()),
            (None, None) => ManifestSource::Files(
                self.annotations
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_default(),
            ),
        };
        ingested
            .annotations
            .into_iter()
            .map(|IngestedAnnotation { annotation, objects, .. }| {
                let manifest = match &single {
                    Some(m) => m.clone(),
                    None => source
                        .resolve(&annotation)
                        .map_err(|e| CliError::input("manifest", e))?,
                };
                Ok(TrajectoryInput {
                    annotation,
                    manifest,
                    objects,
                })
            })
            .collect()
    }
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    segmentation: SegmentationArgs,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    segmentation: SegmentationArgs,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also emit one distractor variant per trajectory.
    #[arg(long)]
    distractor: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    parallelism: usize,
    #[arg(long, default_value_t = DEFAULT_SHARD_SIZE)]
    shard_size: usize,
    /// Comma-separated objects for records without an object list.
    #[arg(long, value_delimiter = ',')]
    objects: Vec<String>,
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendKind,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    timeout_secs: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction log JSONL: `{"traj_id", "turn", "progress", ...}` per line.
    #[arg(long)]
    predictions: PathBuf,
    /// Ground truth JSONL: `{"traj_id", "turn", "p_gt", "n_gt", "m_gt"}` per line.
    #[arg(long)]
    ground_truth: PathBuf,
    /// Also write the report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    segmentation: SegmentationArgs,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Half-width of the noise added to oracle answers.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Probability of a malformed oracle reply.
    #[arg(long, default_value_t = 0.0)]
    malformed_rate: f64,
    #[arg(long, default_value_t = DEFAULT_RETRY_BUDGET)]
    retry_budget: u32,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Args)]
pub struct RewardArgs {
    #[arg(long)]
    p_t: f64,
    #[arg(long)]
    p_prev: Option<f64>,
    #[arg(long)]
    gt_t: f64,
    #[arg(long)]
    gt_prev: Option<f64>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    /// Raw model output; when omitted the format is assumed valid.
    #[arg(long)]
    raw_output: Option<String>,
    #[arg(long)]
    delta1: Option<f64>,
    #[arg(long)]
    delta2: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

pub async fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Label(a) => label(a),
        Command::BuildDataset(a) => build(a).await,
        Command::Eval(a) => eval(a),
        Command::Replay(a) => replay(a).await,
        Command::Serve(a) => serve(a).await,
        Command::RewardScore(a) => reward(a),
    }
}

fn io_err(e: impl ToString) -> CliError {
    CliError::runtime("io", e)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> CliResult {
    let mut w = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn label(args: LabelArgs) -> CliResult {
    let cfg = args.segmentation.config()?;
    let mut rows = Vec::new();
    for t in args.input.load()? {
        let a = &t.annotation;
        rows.extend(
            label_stream(&a.video_ref, a, &t.manifest, &cfg, None)
                .map_err(|e| CliError::input("label", format!("{}: {e}", a.video_ref)))?,
        );
    }
    match args.out {
        Some(p) => write_jsonl(&p, &rows),
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for r in &rows {
                writeln!(out, "{}", serde_json::to_string(r).map_err(io_err)?).map_err(io_err)?;
            }
            Ok(())
        }
    }
}

async fn build(args: BuildArgs) -> CliResult {
    let cfg = args.segmentation.config()?;
    let inputs = args.input.load()?;
    let backend: Box<dyn TextBackend> = match args.backend {
        BackendKind::Mock => Box::new(MockTextBackend),
        BackendKind::Remote => {
            let mut rc = RemoteConfig::default();
            if let Some(v) = args.base_url {
                rc.base_url = v;
            }
            if let Some(v) = args.model {
                rc.model = v;
            }
            rc.api_key_env = args.api_key_env;
            if let Some(v) = args.timeout_secs {
                rc.timeout_secs = v;
            }
            Box::new(RemoteChatBackend::new(rc).map_err(|e| CliError::input("config", e))?)
        }
    };
    let options = BuildOptions {
        seed: args.seed,
        distractor: args.distractor,
        parallelism: args.parallelism,
        shard_size: args.shard_size,
        default_objects: args.objects,
    };
    let out = build_dialogue_dataset(&inputs, &cfg, backend.as_ref(), &options)
        .await
        .map_err(|e| CliError::runtime("build", e))?;
    write_dataset(&args.out_dir, &out, options.shard_size).map_err(io_err)?;
    println!("{}", serde_json::to_string(&out.stats).map_err(io_err)?);
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PredictionLine {
    traj_id: String,
    turn: usize,
    progress: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthLine {
    traj_id: String,
    turn: usize,
    p_gt: f64,
    n_gt: usize,
    m_gt: usize,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, what: &'static str) -> CliResult<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| CliError::input(what, format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::input(what, e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::input(what, format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(rows)
}

/// Joins predictions to ground truth by `(traj_id, turn)`. Trajectories keep
/// the order of their first ground-truth line. Turns after a trajectory's
/// last prediction (a session that finished early) hold that prediction.
fn join_for_eval(
    predictions: &[PredictionLine],
    truth: &[GroundTruthLine],
) -> CliResult<Vec<EvaluatedTrajectory>> {
    let mut pred: HashMap<(&str, usize), f64> = HashMap::new();
    let mut last_turn: HashMap<&str, usize> = HashMap::new();
    for p in predictions {
        pred.insert((p.traj_id.as_str(), p.turn), p.progress);
        let e = last_turn.entry(p.traj_id.as_str()).or_insert(0);
        *e = (*e).max(p.turn);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: HashMap<&str, Vec<&GroundTruthLine>> = HashMap::new();
    for g in truth {
        if !grouped.contains_key(g.traj_id.as_str()) {
            order.push(&g.traj_id);
        }
        grouped.entry(&g.traj_id).or_default().push(g);
    }
    let bad = |m: String| CliError::input("eval", m);
    let mut out = Vec::new();
    for id in order {
        let mut rows = grouped.remove(id).unwrap_or_default();
        rows.sort_by_key(|g| g.turn);
        let last = last_turn.get(id).copied();
        let mut turns = Vec::new();
        for g in rows {
            let key = match last {
                Some(l) if g.turn > l => (id, l),
                _ => (id, g.turn),
            };
            let p = pred
                .get(&key)
                .ok_or_else(|| bad(format!("no prediction for {id} turn {}", g.turn)))?;
            let p = Progress::new(*p).map_err(|e| bad(format!("{id} turn {}: {e}", g.turn)))?;
            let p_gt = Progress::new(g.p_gt).map_err(|e| bad(format!("{id} turn {}: {e}", g.turn)))?;
            let gt = GroundTruthTurn::new(p_gt, g.n_gt, g.m_gt)
                .map_err(|e| bad(format!("{id} turn {}: {e}", g.turn)))?;
            turns.push((p, gt));
        }
        out.push(EvaluatedTrajectory {
            id: id.to_string(),
            turns: TurnEvaluation::sequence(&turns),
        });
    }
    Ok(out)
}

fn report_for(predictions: &[PredictionLine], truth: &[GroundTruthLine]) -> CliResult<BenchmarkReport> {
    let trajs = join_for_eval(predictions, truth)?;
    aggregate_report(&trajs).map_err(|e| CliError::input("eval", e))
}

fn eval(args: EvalArgs) -> CliResult {
    let predictions: Vec<PredictionLine> = read_jsonl(&args.predictions, "predictions")?;
    let truth: Vec<GroundTruthLine> = read_jsonl(&args.ground_truth, "ground_truth")?;
    let report = report_for(&predictions, &truth)?;
    let text = serde_json::to_string_pretty(&report).map_err(io_err)?;
    if let Some(p) = &args.out {
        fs::write(p, format!("{text}\n")).map_err(io_err)?;
    }
    print!("{}", report.to_table());
    println!("{text}");
    Ok(())
}

/// One transcript line of a replay: the turn record tagged with its trajectory.
#[derive(Debug, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub traj_id: String,
    #[serde(flatten)]
    pub record: TurnRecord,
}

async fn replay(args: ReplayArgs) -> CliResult {
    let cfg = args.segmentation.config()?;
    if !(0.0..=1.0).contains(&args.malformed_rate) {
        return Err(CliError::input("config", "malformed_rate must be in [0, 1]"));
    }
    if !(args.noise.is_finite() && args.noise >= 0.0) {
        return Err(CliError::input("config", "noise must be non-negative"));
    }
    let inputs = args.input.load()?;
    fs::create_dir_all(&args.out_dir).map_err(io_err)?;

    let session_cfg = SessionConfig {
        segmentation: cfg,
        reward: RewardConfig::default(),
        retry_budget: args.retry_budget,
    };
    let mut transcript = Vec::new();
    let mut truth = Vec::new();
    for (i, t) in inputs.iter().enumerate() {
        let a = &t.annotation;
        let backend = MockOracleBackend::new(
            Some(a.clone()),
            MockConfig {
                seed: args.seed.wrapping_add(i as u64),
                noise_amplitude: args.noise,
                malformed_rate: args.malformed_rate,
                available: true,
            },
        );
        let mut session = Session::new(&a.task, session_cfg.clone())
            .map_err(|e| CliError::input("config", e))?
            .with_id(&a.video_ref);
        let snippets = segment_stream(&t.manifest, &cfg)
            .map_err(|e| CliError::input("manifest", format!("{}: {e}", a.video_ref)))?;
        for s in &snippets {
            let gt = ground_truth_at(a, None, s.last_timestamp())
                .map_err(|e| CliError::input("annotations", e))?;
            truth.push(GroundTruthLine {
                traj_id: a.video_ref.clone(),
                turn: s.index,
                p_gt: gt.p_gt.value(),
                n_gt: gt.n_gt,
                m_gt: gt.m_gt,
            });
            if session.is_finished() {
                continue;
            }
            let record = session
                .run_turn(&backend, s, Some(gt))
                .await
                .map_err(|e| CliError::runtime("session", format!("{}: {e}", a.video_ref)))?;
            transcript.push(TranscriptLine {
                traj_id: a.video_ref.clone(),
                record,
            });
        }
    }
    write_jsonl(&args.out_dir.join("transcript.jsonl"), &transcript)?;
    write_jsonl(&args.out_dir.join("ground_truth.jsonl"), &truth)?;

    let predictions: Vec<PredictionLine> = transcript
        .iter()
        .map(|l| PredictionLine {
            traj_id: l.traj_id.clone(),
            turn: l.record.turn,
            progress: l.record.progress.value(),
        })
        .collect();
    let report = report_for(&predictions, &truth)?;
    let text = serde_json::to_string_pretty(&report).map_err(io_err)?;
    fs::write(args.out_dir.join("report.json"), format!("{text}\n")).map_err(io_err)?;
    let degraded = transcript.iter().filter(|l| !l.record.parse_ok).count();
    print!("{}", report.to_table());
    println!("degraded turns: {degraded} of {}", transcript.len());
    Ok(())
}

async fn serve(args: ServeArgs) -> CliResult {
    let config = ServiceConfig::load(&args.config).map_err(|e| CliError::input("config", e))?;
    let addr = config.listen_addr().map_err(|e| CliError::input("config", e))?;
    let idle = Duration::from_secs(config.idle_timeout_secs);
    let state = AppState::new(config).map_err(|e| CliError::input("config", e))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::runtime("bind", format!("{addr}: {e}")))?;
    tracing::info!(%addr, "listening");

    let sweeper = {
        let state = state.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval((idle / 4).clamp(Duration::from_secs(1), Duration::from_secs(30)));
            loop {
                tick.tick().await;
                state.evict_idle(idle).await;
            }
        })
    };
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(|e| CliError::runtime("serve", e))?;
    sweeper.abort();
    state.persist_all().await;
    tracing::info!("stopped");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

fn reward(args: RewardArgs) -> CliResult {
    let mut cfg = RewardConfig::default();
    if let Some(v) = args.delta1 {
        cfg.delta1 = v;
    }
    if let Some(v) = args.delta2 {
        cfg.delta2 = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    let req = ScoreRequest {
        p_t: args.p_t,
        p_prev: args.p_prev,
        gt_t: args.gt_t,
        gt_prev: args.gt_prev,
        n: args.n,
        m: args.m,
        raw_output: args.raw_output,
        config: Some(cfg),
    };
    let reply = score(&req).map_err(|e| CliError::input("reward", e))?;
    println!("{}", serde_json::to_string(&reply).map_err(io_err)?);
    Ok(())
}
