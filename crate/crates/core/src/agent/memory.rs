//! What one agent remembers between decisions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::comm::{DialogueHistory, Message};
use crate::world::{
    AgentId, Cell, EnvAction, FailReason, Location, ObjectId, Observation, PredicateProgress, RoomId,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub tick: u32,
    pub action: EnvAction,
    pub text: String,
    pub succeeded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnownObject {
    pub class: String,
    pub location: Location,
    pub portable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open: Option<bool>,
    pub seen_tick: u32,
    /// Expected in the agent's current room but not seen there last time.
    #[serde(default)]
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMemory {
    pub agent_id: AgentId,
    pub name: String,
    /// Names of every agent, indexed by id.
    pub team: Vec<String>,
    /// The floor plan: every room id with its kind name.
    pub rooms: BTreeMap<RoomId, String>,
    pub action_history: Vec<ActionRecord>,
    pub dialogue: DialogueHistory,
    pub known_objects: BTreeMap<ObjectId, KnownObject>,
    pub progress_view: Vec<PredicateProgress>,
    /// Goal-class objects ever seen.
    pub first_seen: BTreeSet<ObjectId>,
    /// Goal-class objects first seen in the latest update.
    pub newly_discovered: Vec<ObjectId>,
    pub visited_rooms: BTreeSet<RoomId>,
    pub tick: u32,
    pub room: RoomId,
    pub cell: Cell,
    pub holding: [Option<(ObjectId, String)>; 2],
    pub progress_increased: bool,
    pub last_failed: bool,
    pub messages_sent: u32,
    pub last_message_tick: Option<u32>,
    pub updates: u32,
    pending_own: Vec<Message>,
    pending_action: Option<(u32, EnvAction, String)>,
}

impl AgentMemory {
    pub fn new(agent_id: AgentId, team: Vec<String>, rooms: BTreeMap<RoomId, String>) -> Self {
        let name = team.get(agent_id.0).cloned().unwrap_or_else(|| crate::world::agent_name(agent_id));
        AgentMemory {
            agent_id,
            name,
            team,
            rooms,
            action_history: Vec::new(),
            dialogue: DialogueHistory::new(),
            known_objects: BTreeMap::new(),
            progress_view: Vec::new(),
            first_seen: BTreeSet::new(),
            newly_discovered: Vec::new(),
            visited_rooms: BTreeSet::new(),
            tick: 0,
            room: RoomId(0),
            cell: Cell::new(0, 0),
            holding: [None, None],
            progress_increased: false,
            last_failed: false,
            messages_sent: 0,
            last_message_tick: None,
            updates: 0,
            pending_own: Vec::new(),
            pending_action: None,
        }
    }

    pub fn teammates(&self) -> Vec<String> {
        self.team.iter().enumerate().filter(|(i, _)| *i != self.agent_id.0).map(|(_, n)| n.clone()).collect()
    }

    pub fn name_of(&self, id: AgentId) -> String {
        self.team.get(id.0).cloned().unwrap_or_else(|| crate::world::agent_name(id))
    }

    pub fn goal_classes(&self) -> BTreeSet<&str> {
        self.progress_view.iter().map(|p| p.predicate.object_class.as_str()).collect()
    }

    /// Remember the env action chosen this macro-step; its outcome arrives
    /// with the next observation.
    pub fn note_action(&mut self, tick: u32, action: EnvAction, text: String) {
        self.pending_action = Some((tick, action, text));
    }

    /// Remember a message this agent broadcast; it joins the dialogue history
    /// together with the messages others sent in the same macro-step.
    pub fn note_sent(&mut self, message: Message) {
        self.messages_sent += 1;
        self.last_message_tick = Some(message.tick);
        self.pending_own.push(message);
    }

    /// Room this agent believes `id` is in, following known carriers.
    pub fn believed_room(&self, id: ObjectId) -> Option<RoomId> {
        let mut loc = self.known_objects.get(&id)?.location;
        for _ in 0..=self.known_objects.len() {
            match loc {
                Location::InRoom { room, .. } => return Some(room),
                Location::Held { agent, .. } => return (agent == self.agent_id).then_some(self.room),
                Location::OnSurface(p) | Location::InContainer(p) => loc = self.known_objects.get(&p)?.location,
            }
        }
        None
    }

    pub fn room_label(&self, room: RoomId) -> String {
        format!("<{}> ({})", self.rooms.get(&room).map(String::as_str).unwrap_or("room"), room)
    }

    pub fn object_label(&self, id: ObjectId) -> String {
        format!("<{}> ({})", self.known_objects.get(&id).map(|o| o.class.as_str()).unwrap_or("object"), id)
    }
}

/// Merge one observation into memory.
pub fn update_memory(memory: &mut AgentMemory, obs: &Observation) {
    debug_assert_eq!(obs.agent_id, memory.agent_id);
    memory.tick = obs.tick;
    memory.room = obs.room;
    memory.cell = obs.cell;
    memory.holding = obs.holding.clone();
    memory.visited_rooms.insert(obs.room);

    memory.last_failed = false;
    if let Some((tick, action, text)) = memory.pending_action.take() {
        let (succeeded, failure) = match &obs.last_action {
            Some(outcome) if outcome.action == action => (outcome.succeeded, outcome.failure),
            _ => (true, None),
        };
        memory.last_failed = !succeeded;
        memory.action_history.push(ActionRecord { tick, action, text, succeeded, failure });
    }

    let goal_classes: BTreeSet<String> = obs.progress.iter().map(|p| p.predicate.object_class.clone()).collect();
    memory.newly_discovered.clear();
    let visible: BTreeSet<ObjectId> = obs.visible.iter().map(|v| v.id).collect();
    for v in &obs.visible {
        memory.known_objects.insert(
            v.id,
            KnownObject {
                class: v.class.clone(),
                location: v.location,
                portable: v.portable,
                open: v.open,
                seen_tick: obs.tick,
                missing: false,
            },
        );
        if goal_classes.contains(&v.class) && memory.first_seen.insert(v.id) {
            memory.newly_discovered.push(v.id);
        }
    }
    for (hand, held) in obs.holding.iter().enumerate() {
        if let Some((id, class)) = held {
            memory.known_objects.insert(
                *id,
                KnownObject {
                    class: class.clone(),
                    location: Location::Held { agent: obs.agent_id, hand: hand as u8 },
                    portable: true,
                    open: memory.known_objects.get(id).and_then(|o| o.open),
                    seen_tick: obs.tick,
                    missing: false,
                },
            );
        }
    }
    let stale: Vec<ObjectId> = memory
        .known_objects
        .keys()
        .copied()
        .filter(|id| !visible.contains(id) && !obs.holding.iter().flatten().any(|(h, _)| h == id))
        .filter(|id| memory.believed_room(*id) == Some(obs.room))
        .collect();
    for id in stale {
        if let Some(o) = memory.known_objects.get_mut(&id) {
            o.missing = true;
        }
    }

    let before: u32 = memory.progress_view.iter().map(|p| p.satisfied).sum();
    let after: u32 = obs.progress.iter().map(|p| p.satisfied).sum();
    memory.progress_increased = memory.updates > 0 && after > before;
    memory.progress_view = obs.progress.clone();

    let mut batch = std::mem::take(&mut memory.pending_own);
    batch.extend(obs.inbox.iter().cloned());
    memory.dialogue.append_batch(batch);
    memory.updates += 1;
}
