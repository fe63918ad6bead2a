use serde::{Deserialize, Serialize};

use crate::llm::KNOWLEDGE_DELIMITER;
use crate::world::AgentId;

pub const MAX_KNOWLEDGE_WORDS: usize = 100;

/// The team's shared cooperation tips. One authoritative copy per episode.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KnowledgeList {
    pub version: u32,
    pub tips_text: String,
    pub last_editor: Option<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeRecord {
    pub version: u32,
    pub tick: u32,
    pub editor: Option<AgentId>,
    pub text: String,
}

impl KnowledgeList {
    pub fn word_count(&self) -> usize {
        self.tips_text.split_whitespace().count()
    }

    /// The successor list with `text` (capped) as its content.
    pub fn updated(&self, text: &str, editor: AgentId) -> KnowledgeList {
        KnowledgeList {
            version: self.version + 1,
            tips_text: cap_words(text, MAX_KNOWLEDGE_WORDS),
            last_editor: Some(editor),
        }
    }

    pub fn record(&self, tick: u32) -> KnowledgeRecord {
        KnowledgeRecord { version: self.version, tick, editor: self.last_editor, text: self.tips_text.clone() }
    }
}

/// Keep at most `limit` words. Over the limit, cut after the last word within
/// the limit that ends a sentence; with no such word, keep the first `limit`
/// words.
pub fn cap_words(text: &str, limit: usize) -> String {
    let text = text.trim();
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    if spans.len() <= limit {
        return text.to_string();
    }
    let within = &spans[..limit];
    let sentence_end = within.iter().rev().find(|(s, e)| {
        let word = &text[*s..*e];
        word.trim_end_matches(['"', '\'', ')']).ends_with(['.', '!', '?'])
    });
    let end = match sentence_end {
        Some((_, e)) => *e,
        None => within.last().map(|(_, e)| *e).unwrap_or(0),
    };
    text[..end].to_string()
}

fn is_delimiter(line: &str) -> bool {
    let t = line.trim();
    t.len() >= 5 && t.chars().all(|c| c == '-')
}

/// Text between the first two delimiter lines of a reflector reply. `None`
/// when the reply does not contain a fenced list.
pub fn parse_knowledge_reply(reply: &str) -> Option<String> {
    debug_assert!(is_delimiter(KNOWLEDGE_DELIMITER));
    let lines: Vec<&str> = reply.lines().collect();
    let first = lines.iter().position(|l| is_delimiter(l))?;
    let second = lines[first + 1..].iter().position(|l| is_delimiter(l))? + first + 1;
    Some(lines[first + 1..second].iter().map(|l| l.trim_end()).collect::<Vec<_>>().join("\n").trim().to_string())
}
