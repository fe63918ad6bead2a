//! Prompt templates with `$NAME$` placeholders.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unbound placeholder ${0}$")]
    UnboundPlaceholder(String),
    #[error("binding {0} matches no placeholder")]
    UnknownBinding(String),
    #[error("unknown template {0}")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Planner,
    MessageGenerator,
    Reflector,
    TransportPlanner,
    TransportMessageGenerator,
    TransportReflector,
}

impl TemplateName {
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Planner => "planner",
            TemplateName::MessageGenerator => "message_generator",
            TemplateName::Reflector => "reflector",
            TemplateName::TransportPlanner => "transport_planner",
            TemplateName::TransportMessageGenerator => "transport_message_generator",
            TemplateName::TransportReflector => "transport_reflector",
        }
    }
}

pub(crate) const GREETINGS: &str = "Alice: \"Hi, I'll let you know if I find any goal objects and finish any subgoals, and ask for your help when necessary.\"
Bob: \"Thanks! I'll let you know if I find any goal objects and finish any subgoals, and ask for your help when necessary.\"";

const HOLDING_NOTE: &str = "Note that I can hold two objects at a time and there are no costs for holding objects. All objects are denoted as <name> (id), such as <table> (712).";

const CONTAINER_NOTE: &str = "Note that I can hold two objects at a time and there are no costs for holding objects. A container can carry up to three objects at once. All objects are denoted as <name> (id), such as <table> (712).";

const HOUSEWORK: &str = "finish the housework";
const TRANSPORT: &str = "transport the target objects to the goal position";

fn planner_body(chore: &str, note: &str) -> String {
    format!(
        "I'm $AGENT_NAME$. I'm in a hurry to {chore} with my teammate $OPPO_NAME$ together. Given our shared goal, dialogue history, and my progress and previous actions, please help me choose the best available action to achieve the goal as soon as possible.
{note}

Goal: $GOAL$
Progress: $PROGRESS$
Dialogue history:
{GREETINGS}
$DIALOGUE_HISTORY$
Previous actions: $ACTION_HISTORY$
Available actions: $AVAILABLE_ACTIONS$
Answer:"
    )
}

fn message_body(chore: &str, note: &str) -> String {
    format!(
        "I'm $AGENT_NAME$. I'm in a hurry to {chore} with my friend $OPPO_NAME$ together. Given our shared goal, dialogue history, and my progress and previous actions, please help me generate a short message to send to $OPPO_NAME$ to help us achieve the goal as soon as possible.
{note}

Goal: $GOAL$
Progress: $PROGRESS$
Previous actions: $ACTION_HISTORY$
Dialogue history:
{GREETINGS}
$DIALOGUE_HISTORY$
Here are some hints to help you generate more useful messages based on previous experiences:
$KNOWLEDGE_LIST$
Note: The generated message should be accurate, helpful and brief. Do not generate repetitive messages and please output the message to send only.
Message:"
    )
}

fn reflector_body(chore: &str, note: &str) -> String {
    format!(
        "I'm $AGENT_NAME$. I'm in a hurry to {chore} with my teammate $OPPO_NAME$ together.
{note}

Given a new piece of decision making experience based on our shared goal, my progress, previous actions, and our current plans, please reflect on the dialogue history and update the knowledge list to better guide future effective communication in cooperative planning.

Goal: $GOAL$
Progress: $PROGRESS$
Dialogue history:
{GREETINGS}
$DIALOGUE_HISTORY$
Previous actions: $ACTION_HISTORY$
Current plans: $CURRENT_PLANS$
Knowledge list:
{KNOWLEDGE_DELIMITER}
$KNOWLEDGE_LIST$
{KNOWLEDGE_DELIMITER}
Note: Please help update the knowledge list within the '-----'. The updated list should integrate insights from both new experiences and previously accumulated knowledge, aiming to provide hints to enhance future communication message exchange between teammates. This knowledge list is shared among all teammates to enable effective communication to improve decision-making during our decentralized planning. Keep the list concise and informative, not exceeding 100 words."
    )
}

/// Line that fences the knowledge list in reflector prompts and replies.
pub const KNOWLEDGE_DELIMITER: &str = "-------------------------";

/// Sentence added before `Answer:` when the planner is asked to estimate
/// action costs itself.
pub const COST_ESTIMATION_INSTRUCTION: &str = "Also estimate how many steps each action takes before choosing.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: String,
    pub required: BTreeSet<String>,
}

/// Placeholder names in order of appearance, with byte spans.
fn placeholders(body: &str) -> Vec<(usize, usize, &str)> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'$' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_uppercase() || bytes[j] == b'_') {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'$' {
                out.push((i, j + 1, &body[i + 1..j]));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

impl PromptTemplate {
    pub fn new(name: TemplateName, body: impl Into<String>) -> Self {
        let body = body.into();
        let required = placeholders(&body).into_iter().map(|(_, _, n)| n.to_string()).collect();
        PromptTemplate { name, body, required }
    }

    pub fn builtin(name: TemplateName) -> Self {
        let body = match name {
            TemplateName::Planner => planner_body(HOUSEWORK, HOLDING_NOTE),
            TemplateName::MessageGenerator => message_body(HOUSEWORK, HOLDING_NOTE),
            TemplateName::Reflector => reflector_body(HOUSEWORK, HOLDING_NOTE),
            TemplateName::TransportPlanner => planner_body(TRANSPORT, CONTAINER_NOTE),
            TemplateName::TransportMessageGenerator => message_body(TRANSPORT, CONTAINER_NOTE),
            TemplateName::TransportReflector => reflector_body(TRANSPORT, CONTAINER_NOTE),
        };
        PromptTemplate::new(name, body)
    }

    /// Copy of the planner with the cost-estimation sentence before `Answer:`.
    pub fn with_cost_estimation(&self) -> Self {
        let body = match self.body.rfind("Answer:") {
            Some(pos) => format!("{}{}\n{}", &self.body[..pos], COST_ESTIMATION_INSTRUCTION, &self.body[pos..]),
            None => format!("{}\n{}", self.body, COST_ESTIMATION_INSTRUCTION),
        };
        PromptTemplate { name: self.name, body, required: self.required.clone() }
    }
}

/// Replace every placeholder of `template` with its binding. Values are
/// inserted literally and never re-scanned. In strict mode a binding that
/// matches no placeholder is an error.
pub fn render_template(
    template: &PromptTemplate,
    bindings: &BTreeMap<String, String>,
    strict: bool,
) -> Result<String, TemplateError> {
    if let Some(missing) = template.required.iter().find(|k| !bindings.contains_key(*k)) {
        return Err(TemplateError::UnboundPlaceholder(missing.clone()));
    }
    if strict {
        if let Some(extra) = bindings.keys().find(|k| !template.required.contains(*k)) {
            return Err(TemplateError::UnknownBinding(extra.clone()));
        }
    }
    let mut out = String::with_capacity(template.body.len() + bindings.values().map(String::len).sum::<usize>());
    let mut last = 0;
    for (start, end, name) in placeholders(&template.body) {
        out.push_str(&template.body[last..start]);
        out.push_str(&bindings[name]);
        last = end;
    }
    out.push_str(&template.body[last..]);
    Ok(out)
}
