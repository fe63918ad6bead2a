//! Text views of an agent's memory used to fill prompt placeholders.
//!
//! The progress text is a fixed sequence of labelled sentences so that both a
//! language model and the scripted backend can read it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::memory::AgentMemory;
use crate::world::{satisfies, Location, ObjectId, TaskKind};

pub const ROOM_PREFIX: &str = "I'm in ";
pub const HOLDING_PREFIX: &str = "Holding: ";
pub const EXPLORED_PREFIX: &str = "Explored rooms: ";
pub const UNEXPLORED_PREFIX: &str = "Unexplored rooms: ";
pub const SEEN_PREFIX: &str = "Goal objects seen: ";
pub const IN_PLACE_PREFIX: &str = "Already in place: ";
pub const UNOPENED_PREFIX: &str = "Unopened containers: ";
pub const TARGETS_PREFIX: &str = "Goal locations: ";
pub const CONTAINERS_PREFIX: &str = "Containers seen: ";
pub const NOTHING: &str = "nothing";
pub const NONE: &str = "none";

/// Everything an agent can tell a prompt about itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalInfo {
    pub agent_name: String,
    pub teammates: Vec<String>,
    pub task_kind: TaskKind,
    pub goal: String,
    pub progress: String,
    pub action_history: String,
    pub dialogue_history: String,
}

impl LocalInfo {
    pub fn from_memory(memory: &AgentMemory, task_kind: TaskKind) -> Self {
        LocalInfo {
            agent_name: memory.name.clone(),
            teammates: memory.teammates(),
            task_kind,
            goal: goal_text(memory),
            progress: progress_text(memory),
            action_history: action_history_text(memory, ACTION_HISTORY_LEN),
            dialogue_history: memory.dialogue.render(|id| memory.name_of(id)),
        }
    }

    /// "Bob", "Bob and Charlie", "Bob, Charlie and David".
    pub fn teammates_text(&self) -> String {
        join_names(&self.teammates)
    }
}

pub fn join_names(names: &[String]) -> String {
    match names {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// Split a `join_names` string back into names.
pub fn split_names(text: &str) -> Vec<String> {
    text.split(", ")
        .flat_map(|part| part.split(" and "))
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

pub const ACTION_HISTORY_LEN: usize = 10;

/// `2 x ON(<plate>, <dinnertable> (23)), 2 x ON(<fork>, <dinnertable> (23))`
pub fn goal_text(memory: &AgentMemory) -> String {
    memory
        .progress_view
        .iter()
        .map(|p| format!("{} x {}", p.predicate.count, p.predicate_text()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Most recent actions, oldest first, with their outcome.
pub fn action_history_text(memory: &AgentMemory, last: usize) -> String {
    let start = memory.action_history.len().saturating_sub(last);
    let items: Vec<String> = memory.action_history[start..]
        .iter()
        .map(|r| format!("{} ({})", r.text, if r.succeeded { "succeeded" } else { "failed" }))
        .collect();
    if items.is_empty() {
        NONE.to_string()
    } else {
        items.join("; ")
    }
}

fn list_or_none(items: Vec<String>, sep: &str) -> String {
    if items.is_empty() {
        NONE.to_string()
    } else {
        items.join(sep)
    }
}

/// Known goal-class objects that already satisfy a predicate.
pub fn in_place(memory: &AgentMemory) -> BTreeSet<ObjectId> {
    let parent = |id: ObjectId| memory.known_objects.get(&id).map(|o| (o.location, o.portable && is_container(memory, id)));
    memory
        .known_objects
        .iter()
        .filter(|(_, o)| o.portable)
        .filter(|(_, o)| memory.progress_view.iter().any(|p| satisfies(&p.predicate, &o.class, o.location, parent)))
        .map(|(id, _)| *id)
        .collect()
}

/// An object something else has been seen inside of.
fn is_container(memory: &AgentMemory, id: ObjectId) -> bool {
    memory.known_objects.get(&id).map(|o| o.open.is_some()).unwrap_or(false)
        || memory.known_objects.values().any(|o| o.location == Location::InContainer(id))
        || CONTAINER_CLASSES.contains(&memory.known_objects.get(&id).map(|o| o.class.as_str()).unwrap_or(""))
}

/// Portable container classes used by the transport tasks.
pub const CONTAINER_CLASSES: &[&str] = &["bowl", "plate", "teatray", "plasticbasket", "woodbasket", "wickerbasket"];

fn held_by_anyone(o: &crate::agent::KnownObject) -> bool {
    matches!(o.location, Location::Held { .. })
}

/// Labelled progress report; see the module docs.
pub fn progress_text(memory: &AgentMemory) -> String {
    let mut parts = Vec::new();
    let preds: Vec<String> = memory
        .progress_view
        .iter()
        .map(|p| format!("{}/{} of {}", p.satisfied.min(p.predicate.count), p.predicate.count, p.predicate_text()))
        .collect();
    parts.push(list_or_none(preds, "; "));
    parts.push(format!("{ROOM_PREFIX}{}", memory.room_label(memory.room)));

    let hands: Vec<String> = memory
        .holding
        .iter()
        .map(|h| match h {
            None => NOTHING.to_string(),
            Some((id, class)) => {
                let inside: Vec<String> = memory
                    .known_objects
                    .iter()
                    .filter(|(_, o)| o.location == Location::InContainer(*id))
                    .map(|(cid, _)| memory.object_label(*cid))
                    .collect();
                if inside.is_empty() {
                    format!("<{class}> ({id})")
                } else {
                    format!("<{class}> ({id}) with {}", inside.join(" + "))
                }
            }
        })
        .collect();
    parts.push(format!("{HOLDING_PREFIX}{}", hands.join("; ")));

    let explored: Vec<String> = memory.visited_rooms.iter().map(|r| memory.room_label(*r)).collect();
    let unexplored: Vec<String> =
        memory.rooms.keys().filter(|r| !memory.visited_rooms.contains(r)).map(|r| memory.room_label(*r)).collect();
    parts.push(format!("{EXPLORED_PREFIX}{}", list_or_none(explored, ", ")));
    parts.push(format!("{UNEXPLORED_PREFIX}{}", list_or_none(unexplored, ", ")));

    let goal_classes = memory.goal_classes();
    let placed = in_place(memory);
    let located = |id: ObjectId| memory.believed_room(id).map(|r| format!("{} in {}", memory.object_label(id), memory.room_label(r)));
    let seen: Vec<String> = memory
        .known_objects
        .iter()
        .filter(|(id, o)| {
            goal_classes.contains(o.class.as_str()) && o.portable && !o.missing && !held_by_anyone(o) && !placed.contains(id)
        })
        .filter_map(|(id, _)| located(*id))
        .collect();
    parts.push(format!("{SEEN_PREFIX}{}", list_or_none(seen, "; ")));
    let placed_labels: Vec<String> = placed.iter().map(|id| memory.object_label(*id)).collect();
    parts.push(format!("{IN_PLACE_PREFIX}{}", list_or_none(placed_labels, ", ")));

    let unopened: Vec<String> = memory
        .known_objects
        .iter()
        .filter(|(_, o)| o.open == Some(false) && !o.portable)
        .filter_map(|(id, _)| located(*id))
        .collect();
    parts.push(format!("{UNOPENED_PREFIX}{}", list_or_none(unopened, "; ")));

    let targets: BTreeSet<ObjectId> = memory.progress_view.iter().map(|p| p.predicate.target).collect();
    let target_text: Vec<String> = targets.iter().filter_map(|id| located(*id)).collect();
    parts.push(format!("{TARGETS_PREFIX}{}", list_or_none(target_text, "; ")));

    let containers: Vec<String> = memory
        .known_objects
        .iter()
        .filter(|(id, o)| {
            o.portable && CONTAINER_CLASSES.contains(&o.class.as_str()) && !o.missing && !held_by_anyone(o)
                && !placed.contains(id) && !goal_classes.contains(o.class.as_str())
        })
        // A container already sitting on a goal target is carrying delivered items.
        .filter(|(id, o)| {
            !matches!(o.location, Location::OnSurface(t) | Location::InContainer(t) if targets.contains(&t))
                && !memory.known_objects.iter().any(|(c, k)| k.location == Location::InContainer(**id) && placed.contains(c))
        })
        .filter_map(|(id, _)| located(*id))
        .collect();
    if !containers.is_empty() {
        parts.push(format!("{CONTAINERS_PREFIX}{}", containers.join("; ")));
    }
    parts.join(". ") + "."
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::update_memory;
    use crate::world::{builtin_task, AgentId, WorldState};

    fn fresh(task: &str) -> AgentMemory {
        let (state, obs) = WorldState::reset(&builtin_task(task).unwrap(), 4).unwrap();
        let team = state.agents.iter().map(|a| a.name.clone()).collect();
        let rooms = state.layout().rooms().iter().map(|r| (r.id, r.name().to_string())).collect();
        let mut m = AgentMemory::new(AgentId(0), team, rooms);
        update_memory(&mut m, &obs[0]);
        m
    }

    #[test]
    fn names_roundtrip() {
        for names in [vec!["Bob"], vec!["Bob", "Charlie"], vec!["Bob", "Charlie", "David"]] {
            let names: Vec<String> = names.into_iter().map(String::from).collect();
            assert_eq!(split_names(&join_names(&names)), names);
        }
    }

    #[test]
    fn progress_has_every_section() {
        let text = progress_text(&fresh("dinner_table"));
        for prefix in [ROOM_PREFIX, HOLDING_PREFIX, EXPLORED_PREFIX, UNEXPLORED_PREFIX, SEEN_PREFIX, IN_PLACE_PREFIX] {
            assert!(text.contains(prefix), "{prefix} missing in {text}");
        }
        assert!(text.starts_with("0/2 of ON(<plate>, <dinnertable> (23))"));
    }

    #[test]
    fn goal_lists_counts() {
        assert!(goal_text(&fresh("wash_dishes")).starts_with("1 x IN(<plate>, <dishwasher> (12))"));
    }

    #[test]
    fn empty_history_says_none() {
        assert_eq!(action_history_text(&fresh("wash_dishes"), 10), NONE);
    }
}
