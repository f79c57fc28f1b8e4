#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::routing::{get, post};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use stepwise_engine::{MockConfig, RemoteConfig};
use stepwise_service::{router, AppState, BackendConfig, ServiceConfig};
use tower::ServiceExt;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Response as stored in a golden file, with the session id replaced by a
/// placeholder.
pub fn golden_value(status: StatusCode, body: &Value) -> Value {
    let mut body = body.clone();
    if body.get("session_id").is_some() {
        body["session_id"] = json!("<session-id>");
    }
    json!({"status": status.as_u16(), "body": body})
}

/// Compares a response to `tests/golden/{name}.json`.
pub fn check_golden(name: &str, status: StatusCode, body: &Value) -> Result<(), String> {
    let actual = golden_value(status, body);
    let path = golden_dir().join(format!("{name}.json"));
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let expected: Value = serde_json::from_str(&text).map_err(|e| format!("{name}: {e}"))?;
    if actual == expected {
        Ok(())
    } else {
        Err(format!("golden {name} differs: got {actual}"))
    }
}

/// Like [`check_golden`], panicking on a difference. `UPDATE_GOLDEN=1`
/// rewrites the file first.
pub fn assert_golden(name: &str, status: StatusCode, body: &Value) {
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        let path = golden_dir().join(format!("{name}.json"));
        std::fs::create_dir_all(golden_dir()).unwrap();
        let text = serde_json::to_string_pretty(&golden_value(status, body)).unwrap();
        std::fs::write(&path, text + "\n").unwrap();
    }
    if let Err(e) = check_golden(name, status, body) {
        panic!("{e}");
    }
}

pub fn mock_config(dir: &Path, mock: MockConfig) -> ServiceConfig {
    ServiceConfig {
        backend: BackendConfig::Mock(mock),
        transcript_dir: dir.to_path_buf(),
        ..ServiceConfig::default()
    }
}

pub fn app(cfg: ServiceConfig) -> (AppState, Router) {
    let state = AppState::new(cfg).unwrap();
    (state.clone(), router(state))
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| json!(String::from_utf8_lossy(&bytes)))
    };
    (status, value)
}

pub fn annotation() -> Value {
    json!({
        "task": "make coffee",
        "video_ref": "coffee-1",
        "steps": [
            {"desc": "grind beans", "t_start": 0, "t_end": 10},
            {"desc": "boil water", "t_start": 10, "t_end": 20},
            {"desc": "brew", "t_start": 20, "t_end": 30},
            {"desc": "pour", "t_start": 30, "t_end": 40}
        ]
    })
}

pub fn frames(end: u32, count: u32) -> Value {
    Value::Array(
        (0..count)
            .map(|i| json!({"ts": (end + 1 + i - count) as f64, "uri": format!("f/{:04}", end + 1 + i - count)}))
            .collect(),
    )
}

pub async fn create(app: &Router, body: Value) -> String {
    let (status, v) = call(app, "POST", "/v1/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

pub fn inline_frames(end: u32) -> Value {
    Value::Array((end - 3..=end).map(|t| json!({"ts": t as f64, "image_b64": "QUJD"})).collect())
}

pub async fn spawn(app: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}/v1")
}

pub fn remote_config(dir: &Path, base_url: String) -> ServiceConfig {
    ServiceConfig {
        backend: BackendConfig::Remote(RemoteConfig {
            base_url,
            timeout_secs: 5.0,
            max_retries: 0,
            ..RemoteConfig::default()
        }),
        transcript_dir: dir.to_path_buf(),
        ..ServiceConfig::default()
    }
}

/// Chat server that can be switched between failing and answering.
pub fn flaky_server(failing: Arc<AtomicBool>, delay: Duration) -> Router {
    Router::new()
        .route("/v1/models", get(|| async { axum::Json(json!({"data": []})) }))
        .route(
            "/v1/chat/completions",
            post(move || {
                let failing = failing.clone();
                async move {
                    tokio::time::sleep(delay).await;
                    if failing.load(Ordering::SeqCst) {
                        (StatusCode::SERVICE_UNAVAILABLE, axum::Json(json!({"error": "down"})))
                    } else {
                        (
                            StatusCode::OK,
                            axum::Json(json!({"choices": [{"message": {"content": "<think>Completed: a.</think><answer>30</answer>"}}]})),
                        )
                    }
                }
            }),
        )
}
