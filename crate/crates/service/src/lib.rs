//! HTTP service and command-line front end.

pub mod app;
pub mod cli;
pub mod config;

pub use app::{router, score, ApiError, AppState, ScoreReply, ScoreRequest};
pub use cli::{run, Cli, CliError};
pub use config::{BackendConfig, ConfigError, ServiceConfig};
