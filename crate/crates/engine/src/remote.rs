//! Chat-completions client for OpenAI-compatible vision-language servers.

use std::time::Duration;

use async_trait::async_trait;
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use reqwest::{Client, RequestBuilder, Response};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use stepwise_core::{Frame, FramePayload};

use crate::backend::{BackendError, TextBackend, TextRequest, TransportKind, VisionBackend};
use crate::prompt::BackendRequest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Base URL up to and including the API version, e.g. `http://host:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub timeout_secs: f64,
    /// Extra attempts on retryable transport errors.
    pub max_retries: u32,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "progress-vlm".into(),
            api_key_env: None,
            timeout_secs: 60.0,
            max_retries: 2,
            max_tokens: 1024,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteChatBackend {
    config: RemoteConfig,
    client: Client,
}

impl RemoteChatBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        if !(config.timeout_secs.is_finite() && config.timeout_secs > 0.0) {
            return Err(BackendError::new(
                TransportKind::Unavailable,
                "timeout_secs must be positive",
            ));
        }
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::new(TransportKind::Unavailable, e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.config.base_url.trim_end_matches('/'))
    }

    fn authorize(&self, rb: RequestBuilder) -> Result<RequestBuilder, BackendError> {
        match &self.config.api_key_env {
            None => Ok(rb),
            Some(var) => std::env::var(var).map(|key| rb.bearer_auth(key)).map_err(|_| {
                BackendError::new(
                    TransportKind::Unavailable,
                    format!("environment variable {var} is not set"),
                )
            }),
        }
    }

    /// Request body for a progress prompt. Frames are inlined as data URLs.
    pub async fn chat_body(&self, req: &BackendRequest) -> Result<Value, BackendError> {
        let mut parts = vec![json!({"type": "text", "text": req.user_prefix()})];
        for frame in &req.frames {
            let url = self.frame_data_url(frame).await?;
            parts.push(json!({"type": "image_url", "image_url": {"url": url}}));
        }
        parts.push(json!({"type": "text", "text": req.user_suffix()}));
        Ok(json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": parts},
            ],
            "max_tokens": self.config.max_tokens,
            "temperature": self.config.temperature,
        }))
    }

    async fn frame_data_url(&self, frame: &Frame) -> Result<String, BackendError> {
        let uri = match &frame.payload {
            FramePayload::ImageB64(b64) => return Ok(format!("data:{};base64,{b64}", frame.media_type)),
            FramePayload::Uri(uri) => uri,
        };
        if uri.starts_with("data:") {
            return Ok(uri.clone());
        }
        let bytes = if uri.starts_with("http://") || uri.starts_with("https://") {
            let resp = self.client.get(uri).send().await.map_err(transport_error)?;
            let resp = check_status(resp).await?;
            resp.bytes().await.map_err(transport_error)?.to_vec()
        } else {
            let path = uri.strip_prefix("file://").unwrap_or(uri);
            tokio::fs::read(path).await.map_err(|e| {
                BackendError::new(TransportKind::Unavailable, format!("cannot read frame {path}: {e}"))
            })?
        };
        Ok(format!("data:{};base64,{}", frame.media_type, STANDARD.encode(bytes)))
    }

    async fn post_chat(&self, body: &Value) -> Result<String, BackendError> {
        let mut attempt = 0;
        loop {
            match self.post_once(body).await {
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    attempt += 1;
                    tracing::warn!(attempt, error = %e, "retrying chat completion");
                    tokio::time::sleep(Duration::from_millis(200 * u64::from(attempt))).await;
                }
                other => return other,
            }
        }
    }

    async fn post_once(&self, body: &Value) -> Result<String, BackendError> {
        let rb = self.authorize(self.client.post(self.url("chat/completions")).json(body))?;
        let resp = check_status(rb.send().await.map_err(transport_error)?).await?;
        let value: Value = resp.json().await.map_err(|e| BackendError::new(TransportKind::Decode, e.to_string()))?;
        message_content(&value)
    }
}

fn transport_error(e: reqwest::Error) -> BackendError {
    let kind = if e.is_timeout() {
        TransportKind::Timeout
    } else if e.is_decode() || e.is_body() {
        TransportKind::Decode
    } else {
        TransportKind::Connection
    };
    BackendError::new(kind, e.to_string())
}

async fn check_status(resp: Response) -> Result<Response, BackendError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let mut text = resp.text().await.unwrap_or_default();
    text.truncate(512);
    Err(BackendError::status(status.as_u16(), text))
}

/// Text of `choices[0].message.content`, which may be a string or a list of
/// text parts.
fn message_content(v: &Value) -> Result<String, BackendError> {
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(BackendError::new(
            TransportKind::Decode,
            "response has no choices[0].message.content",
        )),
    }
}

#[async_trait]
impl VisionBackend for RemoteChatBackend {
    async fn complete(&self, req: &BackendRequest) -> Result<String, BackendError> {
        let body = self.chat_body(req).await?;
        self.post_chat(&body).await
    }

    async fn health(&self) -> Result<(), BackendError> {
        let rb = self.authorize(self.client.get(self.url("models")))?;
        let resp = rb.send().await.map_err(transport_error)?;
        if resp.status().is_server_error() {
            return Err(BackendError::status(resp.status().as_u16(), "health check failed"));
        }
        Ok(())
    }

    fn name(&self) -> &str {
        "remote"
    }
}

#[async_trait]
impl TextBackend for RemoteChatBackend {
    async fn complete_text(&self, req: &TextRequest) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "max_tokens": self.config.max_tokens,
            "temperature": self.config.temperature,
        });
        self.post_chat(&body).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_variants() {
        let v = json!({"choices": [{"message": {"content": "hi"}}]});
        assert_eq!(message_content(&v).unwrap(), "hi");
        let v = json!({"choices": [{"message": {"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]}}]});
        assert_eq!(message_content(&v).unwrap(), "ab");
        let err = message_content(&json!({})).unwrap_err();
        assert_eq!(err.kind, TransportKind::Decode);
    }

    #[test]
    fn rejects_non_positive_timeout() {
        let cfg = RemoteConfig {
            timeout_secs: 0.0,
            ..RemoteConfig::default()
        };
        assert!(RemoteChatBackend::new(cfg).is_err());
    }
}
