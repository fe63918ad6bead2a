//! Per-agent partial observations and their text rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::action::ActionOutcome;
use super::layout::{Cell, RoomId};
use super::object::{AgentId, Location, ObjectId};
use super::task::GoalPredicate;
use crate::comm::Message;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleObject {
    pub id: ObjectId,
    pub class: String,
    pub location: Location,
    /// Can be picked up.
    #[serde(default)]
    pub portable: bool,
    /// Open state, for openable objects only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateProgress {
    pub predicate: GoalPredicate,
    pub target_class: String,
    /// Satisfied instances according to what this agent has observed.
    pub satisfied: u32,
}

impl PredicateProgress {
    /// `IN(<plate>, <dishwasher> (12))`
    pub fn predicate_text(&self) -> String {
        format!(
            "{}(<{}>, <{}> ({}))",
            self.predicate.relation, self.predicate.object_class, self.target_class, self.predicate.target
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub agent_id: AgentId,
    pub agent_name: String,
    pub tick: u32,
    pub room: RoomId,
    pub room_name: String,
    pub cell: Cell,
    /// Objects in the agent's room, sorted by id.
    pub visible: Vec<VisibleObject>,
    pub holding: [Option<(ObjectId, String)>; 2],
    pub progress: Vec<PredicateProgress>,
    pub inbox: Vec<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_action: Option<ActionOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_action_text: Option<String>,
}

impl Observation {
    pub fn last_action_failed(&self) -> bool {
        self.last_action.as_ref().map(|o| !o.succeeded).unwrap_or(false)
    }

    fn label_of(&self, id: ObjectId) -> String {
        let class = self
            .visible
            .iter()
            .find(|v| v.id == id)
            .map(|v| v.class.as_str())
            .or_else(|| self.holding.iter().flatten().find(|(h, _)| *h == id).map(|(_, c)| c.as_str()))
            .unwrap_or("object");
        format!("<{class}> ({id})")
    }
}

/// Text description of what the agent perceives. Goal-agnostic and
/// independent of the clock; objects are listed by ascending id.
pub fn render_observation_text(obs: &Observation) -> String {
    let mut out = String::new();
    let _ = write!(out, "I'm in <{}> ({}) at {}.", obs.room_name, obs.room, obs.cell);
    let hands: Vec<String> = obs
        .holding
        .iter()
        .map(|h| match h {
            Some((id, class)) => format!("<{class}> ({id})"),
            None => "nothing".to_string(),
        })
        .collect();
    let _ = write!(out, " Holding: {}.", hands.join(", "));
    let labels: BTreeMap<ObjectId, String> = obs.visible.iter().map(|v| (v.id, obs.label_of(v.id))).collect();
    let mut items = Vec::new();
    for v in &obs.visible {
        if matches!(v.location, Location::Held { agent, .. } if agent == obs.agent_id) {
            continue;
        }
        let mut item = labels[&v.id].clone();
        match v.location {
            Location::InRoom { cell, .. } => {
                let _ = write!(item, " at {cell}");
            }
            Location::OnSurface(p) => {
                let _ = write!(item, " on {}", labels.get(&p).cloned().unwrap_or_else(|| obs.label_of(p)));
            }
            Location::InContainer(p) => {
                let _ = write!(item, " in {}", labels.get(&p).cloned().unwrap_or_else(|| obs.label_of(p)));
            }
            Location::Held { agent, .. } => {
                let _ = write!(item, " held by agent {agent}");
            }
        }
        match v.open {
            Some(true) => item.push_str(" open"),
            Some(false) => item.push_str(" closed"),
            None => {}
        }
        items.push(item);
    }
    if items.is_empty() {
        out.push_str(" Visible: nothing.");
    } else {
        let _ = write!(out, " Visible: {}.", items.join("; "));
    }
    if let (Some(outcome), Some(text)) = (&obs.last_action, &obs.last_action_text) {
        let verdict = if outcome.succeeded { "succeeded" } else { "failed" };
        let _ = write!(out, " Last action: {text} {verdict}.");
    }
    out
}
