//! Message generation on the sender side and reflection on the receiver side.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::knowledge::{parse_knowledge_reply, KnowledgeList};
use super::{CommTrigger, Message};
use crate::agent::{AgentMemory, LocalInfo};
use crate::llm::{render_template, Backend, BackendError, CompletionRequest, PromptTemplate, TemplateError, TemplateName};
use crate::world::{AgentId, TaskKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
}

/// Sender-side detail handed to a reflecting receiver alongside a message.
/// It travels outside the message channel and never reaches a planner prompt.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PrivilegedInfo {
    pub plan_summary: String,
    pub recent_actions: String,
}

pub const PRIVILEGED_ACTIONS: usize = 3;

impl PrivilegedInfo {
    pub fn from_memory(memory: &AgentMemory) -> Self {
        let plan_summary = match memory.action_history.last() {
            Some(r) if !r.succeeded => format!("{} was working on \"{}\", which failed.", memory.name, r.text),
            Some(r) => format!("{} was working on \"{}\".", memory.name, r.text),
            None => format!("{} has not acted yet.", memory.name),
        };
        PrivilegedInfo {
            plan_summary,
            recent_actions: crate::agent::action_history_text(memory, PRIVILEGED_ACTIONS),
        }
    }

    pub fn render(&self) -> String {
        format!("{} Recent actions: {}", self.plan_summary, self.recent_actions)
    }
}

fn message_template(kind: TaskKind) -> PromptTemplate {
    PromptTemplate::builtin(match kind {
        TaskKind::Household => TemplateName::MessageGenerator,
        TaskKind::Transport => TemplateName::TransportMessageGenerator,
    })
}

fn reflector_template(kind: TaskKind) -> PromptTemplate {
    PromptTemplate::builtin(match kind {
        TaskKind::Household => TemplateName::Reflector,
        TaskKind::Transport => TemplateName::TransportReflector,
    })
}

fn base_bindings(info: &LocalInfo) -> BTreeMap<String, String> {
    [
        ("AGENT_NAME", info.agent_name.clone()),
        ("OPPO_NAME", info.teammates_text()),
        ("GOAL", info.goal.clone()),
        ("PROGRESS", info.progress.clone()),
        ("DIALOGUE_HISTORY", info.dialogue_history.clone()),
        ("ACTION_HISTORY", info.action_history.clone()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn message_bindings(info: &LocalInfo, knowledge: &KnowledgeList) -> BTreeMap<String, String> {
    let mut b = base_bindings(info);
    b.insert("KNOWLEDGE_LIST".into(), knowledge.tips_text.clone());
    b
}

pub fn reflector_bindings(info: &LocalInfo, privileged: &PrivilegedInfo, knowledge: &KnowledgeList) -> BTreeMap<String, String> {
    let mut b = base_bindings(info);
    b.insert("CURRENT_PLANS".into(), privileged.render());
    b.insert("KNOWLEDGE_LIST".into(), knowledge.tips_text.clone());
    b
}

/// A message reply as one line of plain text.
fn clean_reply(reply: &str) -> String {
    let text = reply.trim().trim_start_matches("Message:").trim();
    let text = text.strip_prefix('"').and_then(|t| t.strip_suffix('"')).unwrap_or(text);
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedMessage {
    pub message: Message,
    pub prompt: String,
    pub reply: String,
}

/// Render the message-generator prompt, query the backend and build the
/// message, trimmed to the length cap at a word boundary.
pub fn generate_message(
    backend: &dyn Backend,
    info: &LocalInfo,
    knowledge: &KnowledgeList,
    sender: AgentId,
    tick: u32,
    trigger: Option<CommTrigger>,
    seed: Option<u64>,
) -> Result<GeneratedMessage, CommError> {
    let prompt = render_template(&message_template(info.task_kind), &message_bindings(info, knowledge), true)?;
    let mut request = CompletionRequest::new(prompt.clone());
    if let Some(s) = seed {
        request = request.with_seed(s);
    }
    let reply = backend.complete(&request)?.text;
    let mut message = Message::new(sender, tick, clean_reply(&reply));
    message.trigger = trigger;
    Ok(GeneratedMessage { message, prompt, reply })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionOutcome {
    pub knowledge: KnowledgeList,
    /// False when the reply had no fenced list and the input was kept.
    pub accepted: bool,
    pub prompt: String,
    pub reply: String,
}

/// Receiver-side reflection on `received`. The dialogue history in `info`
/// is expected to contain the message already; if it does not, the message
/// is appended for the prompt.
pub fn reflect_and_update(
    backend: &dyn Backend,
    info: &LocalInfo,
    privileged: &PrivilegedInfo,
    received: &Message,
    sender_name: &str,
    knowledge: &KnowledgeList,
    receiver: AgentId,
    seed: Option<u64>,
) -> Result<ReflectionOutcome, CommError> {
    let line = format!("{sender_name}: \"{}\"", received.text);
    let mut info = info.clone();
    if !info.dialogue_history.lines().any(|l| l == line) {
        if !info.dialogue_history.is_empty() {
            info.dialogue_history.push('\n');
        }
        info.dialogue_history.push_str(&line);
    }
    let prompt =
        render_template(&reflector_template(info.task_kind), &reflector_bindings(&info, privileged, knowledge), true)?;
    let mut request = CompletionRequest::new(prompt.clone());
    if let Some(s) = seed {
        request = request.with_seed(s);
    }
    let reply = backend.complete(&request)?.text;
    match parse_knowledge_reply(&reply) {
        Some(text) => Ok(ReflectionOutcome { knowledge: knowledge.updated(&text, receiver), accepted: true, prompt, reply }),
        None => {
            log::warn!("{}: reflector reply has no fenced knowledge list; keeping version {}", info.agent_name, knowledge.version);
            Ok(ReflectionOutcome { knowledge: knowledge.clone(), accepted: false, prompt, reply })
        }
    }
}
