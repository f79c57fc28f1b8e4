//! Per-trajectory recurrent loop: each turn threads the previous CoT into the
//! prompt, asks the backend, and keeps the new CoT and progress.

use serde::{Deserialize, Serialize};
use stepwise_core::{
    overall_reward, parse_model_output, GroundTruthTurn, ModelError, ParseFailure, Progress,
    RewardBreakdown, RewardConfig, SegmentationConfig, Snippet,
};
use thiserror::Error;
use uuid::Uuid;

use crate::backend::{BackendError, VisionBackend};
use crate::prompt::BackendRequest;
use crate::status::{parse_step_ledger, StepLedger};

pub const DEFAULT_RETRY_BUDGET: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionState {
    Active,
    Finished,
    /// The latest turn could not be parsed and carried its predecessor forward.
    DegradedActive,
}

/// The recurrent reasoning state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CotState {
    /// Body of the most recent well-formed `<think>` block.
    pub text: String,
    pub ledger: StepLedger,
    /// Turn that produced `text` (0 before any).
    pub turn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub segmentation: SegmentationConfig,
    pub reward: RewardConfig,
    /// Extra attempts after a malformed reply.
    pub retry_budget: u32,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            segmentation: SegmentationConfig::default(),
            reward: RewardConfig::default(),
            retry_budget: DEFAULT_RETRY_BUDGET,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.segmentation.validate()?;
        self.reward.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: usize,
    pub snippet_span: (f64, f64),
    pub progress: Progress,
    pub cot_text: String,
    pub parse_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_failure: Option<ParseFailure>,
    pub retries_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<RewardBreakdown>,
    pub step_status: StepLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthTurn>,
}

#[derive(Debug, Error)]
pub enum TurnError {
    #[error("session is finished")]
    Finished,
    #[error("expected snippet {expected}, got {got}")]
    OutOfOrder { expected: usize, got: usize },
    #[error(transparent)]
    Snippet(ModelError),
    #[error(transparent)]
    Transport(#[from] BackendError),
    #[error("reward computation failed: {0}")]
    Reward(ModelError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub task: String,
    pub cot: CotState,
    pub last_progress: Option<Progress>,
    /// Ground-truth label of the previous turn, when one was supplied.
    pub last_gt: Option<Progress>,
    pub turn: usize,
    pub state: SessionState,
    pub config: SessionConfig,
    pub history: Vec<TurnRecord>,
}

impl Session {
    pub fn new(task: impl Into<String>, config: SessionConfig) -> Result<Self, ModelError> {
        let task = task.into();
        if task.trim().is_empty() {
            return Err(ModelError::InvalidConfig("task must not be empty".into()));
        }
        config.validate()?;
        Ok(Self {
            id: Uuid::new_v4().to_string(),
            task,
            cot: CotState::default(),
            last_progress: None,
            last_gt: None,
            turn: 0,
            state: SessionState::Active,
            config,
            history: Vec::new(),
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn is_finished(&self) -> bool {
        self.state == SessionState::Finished
    }

    /// Ends the stream; later turns are refused.
    pub fn close(&mut self) {
        self.state = SessionState::Finished;
    }

    /// Prompt for the next turn.
    pub fn build_prompt(&self, snippet: &Snippet) -> Result<BackendRequest, TurnError> {
        if self.is_finished() {
            return Err(TurnError::Finished);
        }
        let history = (!self.cot.text.is_empty()).then_some(self.cot.text.as_str());
        BackendRequest::new(
            history,
            snippet,
            &self.task,
            self.config.segmentation.frames_per_snippet,
        )
        .map_err(TurnError::Snippet)
    }

    /// Runs one turn. On a transport error the session is left untouched so
    /// the same snippet can be resubmitted.
    pub async fn run_turn(
        &mut self,
        backend: &dyn VisionBackend,
        snippet: &Snippet,
        gt: Option<GroundTruthTurn>,
    ) -> Result<TurnRecord, TurnError> {
        if self.is_finished() {
            return Err(TurnError::Finished);
        }
        if snippet.index != self.turn + 1 {
            return Err(TurnError::OutOfOrder {
                expected: self.turn + 1,
                got: snippet.index,
            });
        }
        let req = self.build_prompt(snippet)?;

        let mut retries_used = 0;
        let mut raw = backend.complete(&req).await?;
        let mut parsed = parse_model_output(&raw);
        while parsed.is_err() && retries_used < self.config.retry_budget {
            retries_used += 1;
            raw = backend.complete(&req).await?;
            parsed = parse_model_output(&raw);
        }

        let (progress, cot, ledger, failure) = match parsed {
            Ok(out) => {
                let ledger = parse_step_ledger(&out.cot);
                (Progress::from_percent(out.progress), out.cot, ledger, None)
            }
            Err(f) => (
                self.last_progress.unwrap_or_else(Progress::zero),
                self.cot.text.clone(),
                self.cot.ledger.clone(),
                Some(f),
            ),
        };

        let rewards = match &gt {
            Some(g) => {
                let (p_prev, gt_prev) = match self.last_gt {
                    Some(prev) => (Some(self.last_progress.unwrap_or_else(Progress::zero)), Some(prev)),
                    None => (None, None),
                };
                Some(
                    overall_reward(Some(&raw), progress, p_prev, g, gt_prev, &self.config.reward)
                        .map_err(TurnError::Reward)?,
                )
            }
            None => None,
        };

        self.turn += 1;
        let parse_ok = failure.is_none();
        if parse_ok {
            self.cot = CotState {
                text: cot.clone(),
                ledger: ledger.clone(),
                turn: self.turn,
            };
            self.last_progress = Some(progress);
        } else if self.last_progress.is_none() {
            self.last_progress = Some(progress);
        }
        if let Some(g) = &gt {
            self.last_gt = Some(g.p_gt);
        }
        self.state = if progress == Progress::complete() {
            SessionState::Finished
        } else if parse_ok {
            SessionState::Active
        } else {
            SessionState::DegradedActive
        };

        let record = TurnRecord {
            turn: self.turn,
            snippet_span: (snippet.t_begin, snippet.t_end),
            progress,
            cot_text: cot,
            parse_ok,
            parse_failure: failure,
            retries_used,
            rewards,
            step_status: ledger,
            ground_truth: gt,
        };
        self.history.push(record.clone());
        Ok(record)
    }
}
