//! Recurrent progress-estimation sessions over pluggable model backends.

pub mod backend;
pub mod mock;
pub mod prompt;
pub mod remote;
pub mod session;
pub mod status;

pub use backend::{
    BackendError, TextBackend, TextPurpose, TextRequest, TransportKind, VisionBackend,
};
pub use mock::{oracle_cot, MockConfig, MockOracleBackend, MockTextBackend, ScriptedBackend};
pub use prompt::{system_instructions, task_question, BackendRequest, NO_HISTORY, PROGRESS_PROMPT};
pub use remote::{RemoteChatBackend, RemoteConfig};
pub use session::{
    CotState, Session, SessionConfig, SessionState, TurnError, TurnRecord, DEFAULT_RETRY_BUDGET,
};
pub use status::{extract_step_status, parse_step_ledger, StatusError, StepLedger};
