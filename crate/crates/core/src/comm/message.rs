use serde::{Deserialize, Serialize};

use super::CommTrigger;
use crate::world::AgentId;

/// Hard cap on message length, in characters.
pub const MAX_MESSAGE_CHARS: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Message {
    pub sender: AgentId,
    pub tick: u32,
    pub text: String,
    /// Why the sender spoke. Not part of the delivered text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<CommTrigger>,
}

impl Message {
    pub fn new(sender: AgentId, tick: u32, text: impl AsRef<str>) -> Self {
        Message { sender, tick, text: trim_to_limit(text.as_ref(), MAX_MESSAGE_CHARS), trigger: None }
    }

    pub fn with_trigger(mut self, trigger: CommTrigger) -> Self {
        self.trigger = Some(trigger);
        self
    }
}

/// Cut `text` to at most `limit` characters, backing off to the last word
/// boundary when the cut would split a word.
pub fn trim_to_limit(text: &str, limit: usize) -> String {
    let text = text.trim();
    if text.chars().count() <= limit {
        return text.to_string();
    }
    let cut: String = text.chars().take(limit).collect();
    let next = text.chars().nth(limit);
    if next.map(char::is_whitespace).unwrap_or(true) {
        return cut.trim_end().to_string();
    }
    match cut.rfind(char::is_whitespace) {
        Some(pos) => cut[..pos].trim_end().to_string(),
        None => cut,
    }
}
