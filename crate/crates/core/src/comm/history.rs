use serde::{Deserialize, Serialize};

use super::Message;

/// Messages exchanged so far, in delivery order. The two opening greetings
/// are part of the prompt templates, not of this list.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DialogueHistory {
    messages: Vec<Message>,
}

impl DialogueHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Append one delivery batch, ordered by `(tick, sender)`. Ticks must
    /// not go backwards.
    pub fn append_batch(&mut self, mut batch: Vec<Message>) {
        batch.sort_by_key(|m| (m.tick, m.sender));
        if let (Some(last), Some(first)) = (self.messages.last(), batch.first()) {
            debug_assert!(first.tick >= last.tick, "dialogue history must be tick-ordered");
        }
        self.messages.extend(batch);
    }

    /// One `Name: "text"` line per message.
    pub fn render(&self, name_of: impl Fn(crate::world::AgentId) -> String) -> String {
        self.messages.iter().map(|m| format!("{}: \"{}\"", name_of(m.sender), m.text)).collect::<Vec<_>>().join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{agent_name, AgentId};

    #[test]
    fn batch_sorted_by_tick_then_sender() {
        let mut h = DialogueHistory::new();
        h.append_batch(vec![Message::new(AgentId(1), 3, "b"), Message::new(AgentId(0), 3, "a")]);
        assert_eq!(h.render(agent_name), "Alice: \"a\"\nBob: \"b\"");
    }

    #[test]
    fn empty_batch_is_noop() {
        let mut h = DialogueHistory::new();
        h.append_batch(Vec::new());
        assert!(h.is_empty());
    }
}
