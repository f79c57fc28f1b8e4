//! Progress-estimation prompt: fixed instructions, the threaded history CoT,
//! one `<image>` placeholder per frame and the task question.

use serde::{Deserialize, Serialize};
use stepwise_core::{Frame, ModelError, Snippet};

/// Full prompt template with `{history_cot}` and `{question}` slots.
pub const PROGRESS_PROMPT: &str = include_str!("../templates/progress_prompt.txt");

const HISTORY_MARKER: &str = "History CoT: ";
const IMAGES_LINE: &str = "Images: <image><image><image><image>";
const IMAGE_TOKEN: &str = "<image>";

/// Stand-in for the history CoT before any CoT exists.
pub const NO_HISTORY: &str = "None";

/// Wraps the task description into the question slot.
pub fn task_question(task: &str) -> String {
    format!("Estimate the completion progress of the task: {task}")
}

/// One request to a vision-language backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub system_prompt: String,
    pub history_cot: String,
    pub frames: Vec<Frame>,
    pub question: String,
}

impl BackendRequest {
    /// Builds a request; frames are put in timestamp order and must number `k`.
    pub fn new(
        history_cot: Option<&str>,
        snippet: &Snippet,
        task: &str,
        k: usize,
    ) -> Result<Self, ModelError> {
        let mut sorted = snippet.clone();
        sorted.frames.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        sorted.validate(k)?;
        let frames = sorted.frames;
        let history = match history_cot {
            Some(h) if !h.is_empty() => h.to_string(),
            _ => NO_HISTORY.to_string(),
        };
        Ok(Self {
            system_prompt: system_instructions().to_string(),
            history_cot: history,
            frames,
            question: task_question(task),
        })
    }

    /// Text preceding the image parts in the user turn.
    pub fn user_prefix(&self) -> String {
        format!("{HISTORY_MARKER}{}\nImages: ", self.history_cot)
    }

    /// Text following the image parts in the user turn.
    pub fn user_suffix(&self) -> String {
        let tail = &PROGRESS_PROMPT[PROGRESS_PROMPT.find(IMAGES_LINE).unwrap() + IMAGES_LINE.len()..];
        tail.replace("{question}", &self.question)
    }

    /// The whole prompt as one string, with an `<image>` token per frame.
    pub fn render_text(&self) -> String {
        let images = IMAGE_TOKEN.repeat(self.frames.len());
        PROGRESS_PROMPT
            .replace(IMAGES_LINE, &format!("Images: {images}"))
            .replace("{history_cot}", &self.history_cot)
            .replace("{question}", &self.question)
    }
}

/// The instruction block of the template (everything before the history slot).
pub fn system_instructions() -> &'static str {
    let at = PROGRESS_PROMPT
        .find(HISTORY_MARKER)
        .expect("template has a history slot");
    PROGRESS_PROMPT[..at].trim_end_matches('\n')
}
