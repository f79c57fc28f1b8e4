//! Structured step status (completed / in progress / pending) recovered from
//! chain-of-thought text.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, TextBackend, TextPurpose, TextRequest};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLedger {
    pub completed: Vec<String>,
    pub in_progress: Vec<String>,
    pub pending: Vec<String>,
    /// Set when the text could not be parsed cleanly.
    #[serde(default)]
    pub low_confidence: bool,
}

impl StepLedger {
    pub fn is_empty(&self) -> bool {
        self.completed.is_empty() && self.in_progress.is_empty() && self.pending.is_empty()
    }

    fn unparsed() -> Self {
        Self {
            low_confidence: true,
            ..Self::default()
        }
    }

    /// Keeps at most one in-progress step; extras move to the front of pending.
    fn normalize(mut self) -> Self {
        if self.in_progress.len() > 1 {
            let extra: Vec<String> = self.in_progress.drain(1..).collect();
            self.pending.splice(0..0, extra);
            self.low_confidence = true;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Completed,
    InProgress,
    Pending,
    Ignored,
}

const MARKERS: &[(&str, Section)] = &[
    ("completed steps:", Section::Completed),
    ("completed:", Section::Completed),
    ("in progress steps:", Section::InProgress),
    ("in-progress steps:", Section::InProgress),
    ("in progress:", Section::InProgress),
    ("in-progress:", Section::InProgress),
    ("remaining steps:", Section::Pending),
    ("remaining:", Section::Pending),
    ("pending steps:", Section::Pending),
    ("pending:", Section::Pending),
    ("uncompleted:", Section::Pending),
    ("progress estimate:", Section::Ignored),
    ("estimate:", Section::Ignored),
];

/// Parses `Completed: … Remaining: …` style markers. Items are separated by
/// semicolons or line breaks; `None` marks an empty list.
pub fn parse_step_ledger(text: &str) -> StepLedger {
    let lower = text.to_ascii_lowercase();
    let mut hits: Vec<(usize, usize, Section)> = Vec::new();
    for &(marker, section) in MARKERS {
        let mut from = 0;
        while let Some(off) = lower[from..].find(marker) {
            let at = from + off;
            let boundary = lower[..at]
                .chars()
                .next_back()
                .is_none_or(|c| !c.is_alphanumeric() && c != '-');
            let taken = hits.iter().any(|&(s, e, _)| at < e && s < at + marker.len());
            if boundary && !taken {
                hits.push((at, at + marker.len(), section));
            }
            from = at + marker.len();
        }
    }
    if hits.is_empty() {
        return StepLedger::unparsed();
    }
    hits.sort_by_key(|h| h.0);

    let mut ledger = StepLedger::default();
    for (i, &(_, end, section)) in hits.iter().enumerate() {
        let stop = hits.get(i + 1).map_or(text.len(), |h| h.0);
        let items = split_items(&text[end..stop]);
        match section {
            Section::Completed => ledger.completed.extend(items),
            Section::InProgress => ledger.in_progress.extend(items),
            Section::Pending => ledger.pending.extend(items),
            Section::Ignored => {}
        }
    }
    ledger.normalize()
}

fn split_items(body: &str) -> Vec<String> {
    body.split(['\n', ';'])
        .map(|s| {
            s.trim()
                .trim_start_matches(['-', '*', '•'])
                .trim_start_matches(|c: char| c.is_ascii_digit())
                .trim_start_matches([')', '.'])
                .trim()
                .trim_end_matches(['.', ','])
                .trim()
        })
        .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("none"))
        .map(str::to_string)
        .collect()
}

pub const STEP_EXTRACTION_PROMPT: &str = "Read the following reasoning about a task in progress and summarize the status of its steps.\n\
Reply with a single JSON object and nothing else, using exactly these keys:\n\
{\"completed\": [...], \"in_progress\": [...], \"pending\": [...]}\n\
At most one step may be in progress.\n\n\
Reasoning:\n{cot}\n";

#[derive(Debug, Error)]
pub enum StatusError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("unparseable step-status reply: {0}")]
    BadReply(String),
}

#[derive(Deserialize)]
struct LedgerReply {
    #[serde(default)]
    completed: Vec<String>,
    #[serde(default)]
    in_progress: OneOrMany,
    #[serde(default)]
    pending: Vec<String>,
}

#[derive(Deserialize, Default)]
#[serde(untagged)]
enum OneOrMany {
    #[default]
    None,
    One(String),
    Many(Vec<String>),
}

/// Step status from a CoT, via the builtin marker parser or, when an
/// extractor backend is given, via a JSON-producing text model.
pub async fn extract_step_status(
    cot: &str,
    extractor: Option<&dyn TextBackend>,
) -> Result<StepLedger, StatusError> {
    if cot.trim().is_empty() {
        return Ok(StepLedger::unparsed());
    }
    let Some(backend) = extractor else {
        return Ok(parse_step_ledger(cot));
    };
    let req = TextRequest {
        prompt: STEP_EXTRACTION_PROMPT.replace("{cot}", cot),
        purpose: TextPurpose::StepExtraction { cot: cot.to_string() },
    };
    let reply = backend.complete_text(&req).await?;
    parse_ledger_reply(&reply)
}

fn parse_ledger_reply(reply: &str) -> Result<StepLedger, StatusError> {
    let body = reply.trim();
    let body = body
        .strip_prefix("```json")
        .or_else(|| body.strip_prefix("```"))
        .map(|b| b.trim_end().trim_end_matches("```"))
        .unwrap_or(body);
    let parsed: LedgerReply =
        serde_json::from_str(body.trim()).map_err(|e| StatusError::BadReply(e.to_string()))?;
    let in_progress = match parsed.in_progress {
        OneOrMany::None => vec![],
        OneOrMany::One(s) if s.trim().is_empty() => vec![],
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    };
    Ok(StepLedger {
        completed: parsed.completed,
        in_progress,
        pending: parsed.pending,
        low_confidence: false,
    }
    .normalize())
}
