//! Grammar of a model answer: one `<think>` block followed by one `<answer>`
//! block holding an integer percentage.

use std::fmt;

use serde::{Deserialize, Serialize};

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

/// A well-formed model answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedOutput {
    /// Exact contents of the `<think>` block.
    pub cot: String,
    pub progress: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseFailure {
    MissingThink,
    MissingAnswer,
    NonInteger,
    OutOfRange,
    TrailingGarbage,
}

impl ParseFailure {
    pub fn code(self) -> &'static str {
        match self {
            ParseFailure::MissingThink => "missing_think",
            ParseFailure::MissingAnswer => "missing_answer",
            ParseFailure::NonInteger => "non_integer",
            ParseFailure::OutOfRange => "out_of_range",
            ParseFailure::TrailingGarbage => "trailing_garbage",
        }
    }
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::error::Error for ParseFailure {}

/// Parses `<think>…</think><answer>N</answer>` with `N` an integer in
/// `[0, 100]`. Whitespace is allowed around and between the blocks and
/// around `N`; anything else outside the blocks is rejected.
pub fn parse_model_output(raw: &str) -> Result<ParsedOutput, ParseFailure> {
    let text = raw.trim();
    if !text.starts_with(THINK_OPEN) {
        return Err(if text.contains(THINK_OPEN) {
            ParseFailure::TrailingGarbage
        } else {
            ParseFailure::MissingThink
        });
    }
    let after_open = &text[THINK_OPEN.len()..];
    let close = after_open.find(THINK_CLOSE).ok_or(ParseFailure::MissingThink)?;
    let cot = &after_open[..close];
    if cot.contains(THINK_OPEN) {
        return Err(ParseFailure::TrailingGarbage);
    }

    let rest = after_open[close + THINK_CLOSE.len()..].trim_start();
    if !rest.starts_with(ANSWER_OPEN) {
        return Err(if rest.contains(ANSWER_OPEN) || rest.contains(THINK_OPEN) {
            ParseFailure::TrailingGarbage
        } else {
            ParseFailure::MissingAnswer
        });
    }
    let after_answer = &rest[ANSWER_OPEN.len()..];
    let end = after_answer.find(ANSWER_CLOSE).ok_or(ParseFailure::MissingAnswer)?;
    let content = &after_answer[..end];
    if !after_answer[end + ANSWER_CLOSE.len()..].trim().is_empty() {
        return Err(ParseFailure::TrailingGarbage);
    }

    let progress = parse_percentage(content.trim())?;
    Ok(ParsedOutput {
        cot: cot.to_string(),
        progress,
    })
}

fn parse_percentage(s: &str) -> Result<u8, ParseFailure> {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseFailure::NonInteger);
    }
    match s.parse::<i64>() {
        Ok(v) if (0..=100).contains(&v) => Ok(v as u8),
        _ => Err(ParseFailure::OutOfRange),
    }
}

/// Renders an answer in the canonical layout.
pub fn render_output(cot: &str, progress: u8) -> String {
    format!("{THINK_OPEN}\n{cot}\n{THINK_CLOSE}\n{ANSWER_OPEN}\n{progress}\n{ANSWER_CLOSE}")
}
