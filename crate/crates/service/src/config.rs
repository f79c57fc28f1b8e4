//! Service configuration, read from a TOML file.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! transcript_dir = "transcripts"
//! idle_timeout_secs = 900
//! retry_budget = 2
//!
//! [backend]
//! kind = "remote"              # or "mock"
//! base_url = "http://127.0.0.1:8000/v1"
//! model = "progress-vlm"
//! api_key_env = "STEPWISE_API_KEY"
//! timeout_secs = 60
//!
//! [segmentation]
//! snippet_seconds = 4.0
//! frames_per_snippet = 4
//! fps = 1.0
//!
//! [reward]
//! delta1 = 20.0
//! alpha = 0.5
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stepwise_core::{RewardConfig, SegmentationConfig};
use stepwise_engine::{MockConfig, RemoteConfig, SessionConfig, DEFAULT_RETRY_BUDGET};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {rule}")]
    Invalid { field: String, rule: String },
}

impl ConfigError {
    fn invalid(field: &str, rule: &str) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            rule: rule.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Mock(MockConfig),
    Remote(RemoteConfig),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock(MockConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub backend: BackendConfig,
    pub segmentation: SegmentationConfig,
    pub reward: RewardConfig,
    pub retry_budget: u32,
    pub idle_timeout_secs: u64,
    pub transcript_dir: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            backend: BackendConfig::default(),
            segmentation: SegmentationConfig::alfred(),
            reward: RewardConfig::default(),
            retry_budget: DEFAULT_RETRY_BUDGET,
            idle_timeout_secs: 900,
            transcript_dir: PathBuf::from("transcripts"),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn listen_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.listen
            .parse()
            .map_err(|_| ConfigError::invalid("listen", "must be a socket address like 127.0.0.1:8080"))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.listen_addr()?;
        if self.idle_timeout_secs == 0 {
            return Err(ConfigError::invalid("idle_timeout_secs", "must be positive"));
        }
        if self.transcript_dir.as_os_str().is_empty() {
            return Err(ConfigError::invalid("transcript_dir", "must not be empty"));
        }
        split_model_error(self.segmentation.validate())?;
        split_model_error(self.reward.validate())?;
        match &self.backend {
            BackendConfig::Mock(m) => {
                if !(0.0..=1.0).contains(&m.malformed_rate) {
                    return Err(ConfigError::invalid("backend.malformed_rate", "must be in [0, 1]"));
                }
                if !(m.noise_amplitude.is_finite() && m.noise_amplitude >= 0.0) {
                    return Err(ConfigError::invalid("backend.noise_amplitude", "must be non-negative"));
                }
            }
            BackendConfig::Remote(r) => {
                if r.base_url.trim().is_empty() {
                    return Err(ConfigError::invalid("backend.base_url", "must not be empty"));
                }
                if r.model.trim().is_empty() {
                    return Err(ConfigError::invalid("backend.model", "must not be empty"));
                }
                if !(r.timeout_secs.is_finite() && r.timeout_secs > 0.0) {
                    return Err(ConfigError::invalid("backend.timeout_secs", "must be positive"));
                }
                if r.max_tokens == 0 {
                    return Err(ConfigError::invalid("backend.max_tokens", "must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            segmentation: self.segmentation,
            reward: self.reward,
            retry_budget: self.retry_budget,
        }
    }
}

/// Core validation messages read `section.field rule`; split them so the
/// field is reported on its own.
fn split_model_error(r: Result<(), stepwise_core::ModelError>) -> Result<(), ConfigError> {
    r.map_err(|e| match e {
        stepwise_core::ModelError::InvalidConfig(msg) => match msg.split_once(' ') {
            Some((field, rule)) => ConfigError::invalid(field, rule),
            None => ConfigError::Parse(msg),
        },
        other => ConfigError::Parse(other.to_string()),
    })
}
