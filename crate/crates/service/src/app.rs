//! HTTP routes, session registry, transcripts and idle eviction.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use stepwise_core::{
    overall_reward, DistractorSpec, Frame, GroundTruthTurn, Progress, RewardBreakdown,
    RewardConfig, SegmentationConfig, Snippet, TaskAnnotation,
};
use stepwise_engine::{
    BackendError, MockOracleBackend, RemoteChatBackend, Session, SessionState, TurnError,
    TurnRecord, VisionBackend,
};
use tokio::io::AsyncWriteExt;

use crate::config::{BackendConfig, ServiceConfig};

/// JSON error reply: `{"error": {"code": ..., "message": ...}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}"))
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

struct Slot {
    session: tokio::sync::Mutex<Session>,
    backend: Arc<dyn VisionBackend>,
    last_used: Mutex<Instant>,
}

impl Slot {
    fn touch(&self) {
        *self.last_used.lock().unwrap() = Instant::now();
    }
}

struct Inner {
    config: ServiceConfig,
    remote: Option<Arc<RemoteChatBackend>>,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> anyhow::Result<Self> {
        let remote = match &config.backend {
            BackendConfig::Remote(r) => Some(Arc::new(RemoteChatBackend::new(r.clone())?)),
            BackendConfig::Mock(_) => None,
        };
        Ok(Self {
            inner: Arc::new(Inner {
                config,
                remote,
                sessions: Mutex::new(HashMap::new()),
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.lock().unwrap().len()
    }

    fn backend_for(
        &self,
        annotation: Option<TaskAnnotation>,
        distractor: Option<DistractorSpec>,
    ) -> Arc<dyn VisionBackend> {
        match (&self.inner.config.backend, &self.inner.remote) {
            (_, Some(remote)) => remote.clone(),
            (BackendConfig::Mock(m), None) => {
                let mut b = MockOracleBackend::new(annotation, m.clone());
                if let Some(d) = distractor {
                    b = b.with_distractor(d);
                }
                Arc::new(b)
            }
            (BackendConfig::Remote(_), None) => unreachable!("remote backend built in AppState::new"),
        }
    }

    fn slot(&self, id: &str) -> ApiResult<Arc<Slot>> {
        self.inner
            .sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn transcript_path(&self, id: &str) -> PathBuf {
        self.inner.config.transcript_dir.join(format!("{id}.jsonl"))
    }

    fn snapshot_path(&self, id: &str) -> PathBuf {
        self.inner.config.transcript_dir.join(format!("{id}.session.json"))
    }

    async fn append_transcript(&self, id: &str, record: &TurnRecord) -> std::io::Result<()> {
        tokio::fs::create_dir_all(&self.inner.config.transcript_dir).await?;
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let mut f = tokio::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.transcript_path(id))
            .await?;
        f.write_all(&line).await?;
        f.flush().await
    }

    async fn persist_snapshot(&self, session: &Session) -> std::io::Result<()> {
        tokio::fs::create_dir_all(&self.inner.config.transcript_dir).await?;
        let text = serde_json::to_vec_pretty(session)?;
        tokio::fs::write(self.snapshot_path(&session.id), text).await
    }

    /// Persists and drops sessions idle for longer than `max_idle`. Sessions
    /// with a turn in flight are skipped.
    pub async fn evict_idle(&self, max_idle: Duration) -> usize {
        let stale: Vec<(String, Arc<Slot>)> = {
            let mut map = self.inner.sessions.lock().unwrap();
            let ids: Vec<String> = map
                .iter()
                .filter(|(_, s)| s.last_used.lock().unwrap().elapsed() >= max_idle)
                .filter(|(_, s)| s.session.try_lock().is_ok())
                .map(|(id, _)| id.clone())
                .collect();
            ids.into_iter()
                .filter_map(|id| map.remove(&id).map(|s| (id, s)))
                .collect()
        };
        for (id, slot) in &stale {
            let session = slot.session.lock().await;
            if let Err(e) = self.persist_snapshot(&session).await {
                tracing::error!(session = %id, error = %e, "failed to persist evicted session");
            }
            tracing::info!(session = %id, turns = session.turn, "evicted idle session");
        }
        stale.len()
    }

    /// Persists every live session, e.g. before shutdown.
    pub async fn persist_all(&self) {
        let slots: Vec<Arc<Slot>> = self.inner.sessions.lock().unwrap().values().cloned().collect();
        for slot in slots {
            let session = slot.session.lock().await;
            if let Err(e) = self.persist_snapshot(&session).await {
                tracing::error!(session = %session.id, error = %e, "failed to persist session");
            }
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session).delete(delete_session))
        .route("/v1/sessions/{id}/turns", post(submit_turn))
        .route("/v1/rewards/score", post(score_reward))
        .with_state(state)
}

async fn healthz(State(state): State<AppState>) -> Json<serde_json::Value> {
    let backend = state.backend_for(None, None);
    let health = backend.health().await;
    let mut status = json!({
        "name": backend.name(),
        "reachable": health.is_ok(),
    });
    if let Err(e) = health {
        status["error"] = json!(e.message);
    }
    Json(json!({
        "status": "ok",
        "backend": status,
        "sessions": state.session_count(),
    }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SessionOverrides {
    segmentation: Option<SegmentationConfig>,
    reward: Option<RewardConfig>,
    retry_budget: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    task: String,
    #[serde(default)]
    config: SessionOverrides,
    /// Ground truth for the mock oracle backend.
    #[serde(default)]
    annotation: Option<TaskAnnotation>,
    #[serde(default)]
    distractor: Option<DistractorSpec>,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession = parse_body(&body)?;
    if req.task.trim().is_empty() {
        return Err(ApiError::bad_request("task must not be empty"));
    }
    let annotation = req
        .annotation
        .map(|a| a.validated())
        .transpose()
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    if let Some(d) = &req.distractor {
        let a = annotation
            .as_ref()
            .ok_or_else(|| ApiError::bad_request("distractor requires an annotation"))?;
        d.check(a).map_err(|e| ApiError::bad_request(e.to_string()))?;
    }
    let mut cfg = state.config().session_config();
    if let Some(s) = req.config.segmentation {
        cfg.segmentation = s;
    }
    if let Some(r) = req.config.reward {
        cfg.reward = r;
    }
    if let Some(b) = req.config.retry_budget {
        cfg.retry_budget = b;
    }
    let session = Session::new(req.task, cfg).map_err(|e| ApiError::bad_request(e.to_string()))?;

    let backend = state.backend_for(annotation, req.distractor);
    backend.health().await.map_err(|e| {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "backend_unavailable", e.message)
    })?;

    let id = session.id.clone();
    let reply = json!({
        "session_id": id,
        "state": session.state,
        "config": session.config,
    });
    let slot = Arc::new(Slot {
        session: tokio::sync::Mutex::new(session),
        backend,
        last_used: Mutex::new(Instant::now()),
    });
    state.inner.sessions.lock().unwrap().insert(id.clone(), slot);
    tracing::info!(session = %id, "session created");
    Ok((StatusCode::CREATED, Json(reply)).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnBody {
    frames: Vec<Frame>,
    #[serde(default)]
    ground_truth: Option<GroundTruthTurn>,
    /// Turn number the client means to submit; an already accepted turn is
    /// answered from the session history.
    #[serde(default)]
    index: Option<usize>,
}

#[derive(Debug, Serialize)]
struct TurnReply<'a> {
    session_id: &'a str,
    state: SessionState,
    #[serde(flatten)]
    record: &'a TurnRecord,
}

fn transport_reply(e: &BackendError) -> ApiError {
    ApiError::new(
        StatusCode::BAD_GATEWAY,
        "backend_transport",
        format!("{:?}: {}", e.kind, e.message).to_lowercase(),
    )
}

async fn submit_turn(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let slot = state.slot(&id)?;
    let req: TurnBody = parse_body(&body)?;
    let Ok(mut session) = slot.session.try_lock() else {
        return Err(ApiError::new(StatusCode::CONFLICT, "session_busy", "a turn is already in progress"));
    };
    slot.touch();

    if let Some(i) = req.index {
        if i >= 1 && i <= session.turn {
            let record = &session.history[i - 1];
            let reply = TurnReply {
                session_id: &id,
                state: session.state,
                record,
            };
            return Ok(Json(reply).into_response());
        }
        if i != session.turn + 1 {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "out_of_order",
                format!("expected turn {}, got {i}", session.turn + 1),
            ));
        }
    }
    if session.is_finished() {
        return Err(ApiError::new(StatusCode::CONFLICT, "session_finished", "session is finished"));
    }
    let k = session.config.segmentation.frames_per_snippet;
    if req.frames.len() != k {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "frame_count",
            format!("expected {k} frames, got {}", req.frames.len()),
        ));
    }
    let mut frames = req.frames;
    frames.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let snippet = Snippet {
        index: session.turn + 1,
        t_begin: frames[0].timestamp,
        t_end: frames[k - 1].timestamp,
        frames,
        short_tail: false,
        padded: false,
    };

    let record = session
        .run_turn(slot.backend.as_ref(), &snippet, req.ground_truth)
        .await
        .map_err(|e| match e {
            TurnError::Finished => ApiError::new(StatusCode::CONFLICT, "session_finished", e.to_string()),
            TurnError::OutOfOrder { .. } => ApiError::new(StatusCode::CONFLICT, "out_of_order", e.to_string()),
            TurnError::Snippet(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_snippet", e.to_string()),
            TurnError::Transport(ref b) => transport_reply(b),
            TurnError::Reward(_) => ApiError::bad_request(e.to_string()),
        })?;
    state
        .append_transcript(&id, &record)
        .await
        .map_err(|e| ApiError::internal(format!("transcript write failed: {e}")))?;
    slot.touch();
    let reply = TurnReply {
        session_id: &id,
        state: session.state,
        record: &record,
    };
    Ok(Json(reply).into_response())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let slot = state.slot(&id)?;
    let session = slot.session.lock().await;
    Ok(Json(&*session).into_response())
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let slot = state
        .inner
        .sessions
        .lock()
        .unwrap()
        .remove(&id)
        .ok_or_else(|| ApiError::not_found(&id))?;
    let mut session = slot.session.lock().await;
    session.close();
    state
        .persist_snapshot(&session)
        .await
        .map_err(|e| ApiError::internal(format!("snapshot write failed: {e}")))?;
    Ok(Json(json!({
        "session_id": id,
        "state": session.state,
        "turns": session.turn,
    }))
    .into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub p_t: f64,
    #[serde(default)]
    pub p_prev: Option<f64>,
    pub gt_t: f64,
    #[serde(default)]
    pub gt_prev: Option<f64>,
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub raw_output: Option<String>,
    #[serde(default)]
    pub config: Option<RewardConfig>,
}

#[derive(Debug, Serialize)]
pub struct ScoreReply {
    #[serde(flatten)]
    pub breakdown: RewardBreakdown,
    pub config: RewardConfig,
}

/// Stateless reward computation shared by the endpoint and the CLI.
pub fn score(req: &ScoreRequest) -> Result<ScoreReply, String> {
    let progress = |name: &str, v: f64| Progress::new(v).map_err(|e| format!("{name}: {e}"));
    let cfg = req.config.unwrap_or_default();
    cfg.validate().map_err(|e| e.to_string())?;
    let p_t = progress("p_t", req.p_t)?;
    let p_prev = req.p_prev.map(|v| progress("p_prev", v)).transpose()?;
    let gt_prev = req.gt_prev.map(|v| progress("gt_prev", v)).transpose()?;
    let gt = GroundTruthTurn::new(progress("gt_t", req.gt_t)?, req.n, req.m).map_err(|e| e.to_string())?;
    let breakdown = overall_reward(req.raw_output.as_deref(), p_t, p_prev, &gt, gt_prev, &cfg)
        .map_err(|e| e.to_string())?;
    Ok(ScoreReply { breakdown, config: cfg })
}

async fn score_reward(body: Bytes) -> ApiResult<Json<ScoreReply>> {
    let req: ScoreRequest = parse_body(&body)?;
    score(&req).map(Json).map_err(ApiError::bad_request)
}
