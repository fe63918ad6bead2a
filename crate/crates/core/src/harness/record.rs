//! Episode records: one JSON line for the header, one per macro-step, one
//! for the footer.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::HarnessError;
use crate::comm::{KnowledgeList, KnowledgeRecord, Message};
use crate::llm::BackendError;
use crate::world::{AgentId, EnvAction, FailReason, Task};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub schema_version: u32,
    pub config_hash: String,
    pub config: RunConfig,
    pub task: Task,
    pub seed: u64,
    pub backend: String,
    /// sha256 of the utility model file contents, when one was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_digest: Option<String>,
    /// Knowledge list the episode started from (carried over when
    /// persistence is on).
    #[serde(default)]
    pub initial_knowledge: KnowledgeList,
}

/// One prompt sent to the backend and what came back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    /// Full prompt, or its `sha256:` digest in hash-only runs.
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<BackendError>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub retries: u32,
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Plan,
    Communicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub agent: AgentId,
    pub kind: StepKind,
    pub observation: String,
    pub action: EnvAction,
    pub action_text: String,
    pub succeeded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailReason>,
    pub cost: u32,
    pub exchanges: Vec<Exchange>,
    pub parse_failures: u32,
    pub fallback: bool,
    pub backend_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub recipient: AgentId,
    pub sender: AgentId,
    pub tick: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionEvent {
    pub receiver: AgentId,
    pub sender: AgentId,
    pub message_tick: u32,
    pub accepted: bool,
    pub exchange: Exchange,
    pub backend_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    /// Clock at the start of the macro-step.
    pub tick: u32,
    /// Clock after it.
    pub tick_after: u32,
    pub deliveries: Vec<Delivery>,
    /// Digest of each agent's dialogue history after delivery.
    pub dialogue_digests: Vec<String>,
    pub reflections: Vec<ReflectionEvent>,
    pub knowledge_updates: Vec<KnowledgeRecord>,
    pub knowledge_version: u32,
    pub agents: Vec<AgentStep>,
    pub messages: Vec<Message>,
    pub goal_progress: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFooter {
    pub completed: bool,
    pub steps_used: u32,
    pub horizon: u32,
    pub goal_progress: f64,
    /// Goal instances satisfied at the end (within the budget).
    pub delivered: u32,
    pub total_targets: u32,
    pub macro_steps: u32,
    pub messages_sent: u32,
    pub reflections: u32,
    pub backend_failures: u32,
    pub parse_failures: u32,
    pub fallbacks: u32,
    pub undelivered_messages: u32,
    /// Cost-model queries issued (one per annotated candidate).
    pub utility_queries: u64,
    pub knowledge: KnowledgeList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub header: RecordHeader,
    pub events: Vec<StepEvent>,
    pub footer: RecordFooter,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(RecordHeader),
    Event(StepEvent),
    Footer(RecordFooter),
}

impl EpisodeRecord {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: Line| {
            out.push_str(&serde_json::to_string(&line).expect("record serializes"));
            out.push('\n');
        };
        push(Line::Header(self.header.clone()));
        for e in &self.events {
            push(Line::Event(e.clone()));
        }
        push(Line::Footer(self.footer.clone()));
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), HarnessError> {
        w.write_all(self.to_jsonl().as_bytes()).map_err(|e| HarnessError::Io(e.to_string()))
    }

    pub fn from_jsonl(text: &str) -> Result<Self, HarnessError> {
        Self::read_jsonl(text.as_bytes())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, HarnessError> {
        let mut header = None;
        let mut events = Vec::new();
        let mut footer = None;
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| HarnessError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            if n == 0 {
                #[derive(Deserialize)]
                struct Probe {
                    schema_version: u32,
                }
                let probe: Probe =
                    serde_json::from_str(&line).map_err(|e| HarnessError::Record(format!("header: {e}")))?;
                if probe.schema_version != RECORD_SCHEMA_VERSION {
                    return Err(HarnessError::SchemaVersionMismatch {
                        found: probe.schema_version,
                        expected: RECORD_SCHEMA_VERSION,
                    });
                }
            }
            match serde_json::from_str::<Line>(&line).map_err(|e| HarnessError::Record(format!("line {}: {e}", n + 1)))? {
                Line::Header(h) if header.is_none() => header = Some(h),
                Line::Event(e) if header.is_some() && footer.is_none() => events.push(e),
                Line::Footer(f) if header.is_some() && footer.is_none() => footer = Some(f),
                _ => return Err(HarnessError::Record(format!("line {} out of order", n + 1))),
            }
        }
        Ok(EpisodeRecord {
            header: header.ok_or_else(|| HarnessError::Record("missing header".into()))?,
            events,
            footer: footer.ok_or_else(|| HarnessError::Record("missing footer".into()))?,
        })
    }

    /// Backend replies in the order they were requested, for replaying a
    /// record made with a live backend.
    pub fn logged_exchanges(&self) -> Vec<Exchange> {
        let mut out = Vec::new();
        for e in &self.events {
            out.extend(e.reflections.iter().map(|r| r.exchange.clone()));
            for a in &e.agents {
                out.extend(a.exchanges.iter().cloned());
            }
        }
        out
    }
}
