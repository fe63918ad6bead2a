//! World state, transition function and the ground-truth cost oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::action::{ActionOutcome, EnvAction, FailReason, WalkTarget};
use super::layout::{Layout, Position, RoomId};
use super::object::{AgentId, Location, ObjectId, ObjectInstance, CONTAINER_CAPACITY};
use super::observe::{Observation, PredicateProgress, VisibleObject};
use super::task::{GoalPredicate, Relation, Task};
use super::WorldError;

const AGENT_NAMES: [&str; 8] = ["Alice", "Bob", "Charlie", "David", "Eve", "Frank", "Grace", "Heidi"];

pub fn agent_name(id: AgentId) -> String {
    AGENT_NAMES.get(id.0).map(|s| s.to_string()).unwrap_or_else(|| format!("Agent{}", id.0))
}

/// Fixed cost of every manipulation, comm and wait action.
pub const MANIPULATION_COST: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentBody {
    pub agent_id: AgentId,
    pub name: String,
    pub position: Position,
    pub hands: [Option<ObjectId>; 2],
}

impl AgentBody {
    pub fn held(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.hands.iter().flatten().copied()
    }

    pub fn free_hand(&self) -> Option<u8> {
        self.hands.iter().position(Option::is_none).map(|h| h as u8)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub state: WorldState,
    pub observations: Vec<Observation>,
    pub reward: f64,
    pub done: bool,
    pub costs: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub task_id: String,
    pub tick: u32,
    pub horizon: u32,
    pub seed: u64,
    pub rooms: Arc<Layout>,
    pub objects: BTreeMap<ObjectId, ObjectInstance>,
    pub agents: Vec<AgentBody>,
    pub goal: Vec<GoalPredicate>,
    /// Last observed location of every object each agent has ever seen.
    pub knowledge: Vec<BTreeMap<ObjectId, Location>>,
    pub last_outcomes: Vec<Option<ActionOutcome>>,
}

/// Whether an object at `location` counts toward `pred`. Objects riding
/// inside a portable container count wherever the container was delivered.
pub(crate) fn satisfies<F>(pred: &GoalPredicate, class: &str, location: Location, parent: F) -> bool
where
    F: Fn(ObjectId) -> Option<(Location, bool)>,
{
    if class != pred.object_class {
        return false;
    }
    let mut loc = location;
    for _ in 0..64 {
        match (pred.relation, loc) {
            (Relation::On, Location::OnSurface(s)) if s == pred.target => return true,
            (Relation::In, Location::InContainer(c)) if c == pred.target => return true,
            (_, Location::InContainer(c)) => match parent(c) {
                Some((next, true)) => loc = next,
                _ => return false,
            },
            _ => return false,
        }
    }
    false
}

/// Fraction of goal instances currently satisfied.
pub fn goal_progress(objects: &BTreeMap<ObjectId, ObjectInstance>, goal: &[GoalPredicate]) -> f64 {
    let total: u32 = goal.iter().map(|p| p.count).sum();
    if total == 0 {
        return 1.0;
    }
    let satisfied: u32 = goal.iter().map(|p| satisfied_count(objects, p).min(p.count)).sum();
    satisfied as f64 / total as f64
}

pub(crate) fn satisfied_count(objects: &BTreeMap<ObjectId, ObjectInstance>, pred: &GoalPredicate) -> u32 {
    let parent = |id: ObjectId| objects.get(&id).map(|o| (o.location, o.portable && o.is_container));
    objects
        .values()
        .filter(|o| o.portable && satisfies(pred, &o.class, o.location, parent))
        .count() as u32
}

impl WorldState {
    /// Build the initial state. Agents start on seed-derived walkable cells.
    pub fn reset(task: &Task, seed: u64) -> Result<(WorldState, Vec<Observation>), WorldError> {
        let (layout, objects) = task.validate()?;
        let cells = layout.walkable_positions();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let agents = (0..task.n_agents)
            .map(|i| {
                let id = AgentId(i);
                AgentBody {
                    agent_id: id,
                    name: agent_name(id),
                    position: cells[rng.gen_range(0..cells.len())],
                    hands: [None, None],
                }
            })
            .collect();
        let mut state = WorldState {
            task_id: task.id.clone(),
            tick: 0,
            horizon: task.horizon,
            seed,
            rooms: Arc::new(layout),
            objects,
            agents,
            goal: task.goal.clone(),
            knowledge: vec![BTreeMap::new(); task.n_agents],
            last_outcomes: vec![None; task.n_agents],
        };
        state.refresh_knowledge();
        let obs = state.observe_all();
        Ok((state, obs))
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&self, id: AgentId) -> Result<&AgentBody, WorldError> {
        self.agents.get(id.0).ok_or(WorldError::UnknownAgent(id))
    }

    pub fn layout(&self) -> &Layout {
        &self.rooms
    }

    /// Canonical serialization for equality checks.
    pub fn snapshot(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    pub fn goal_progress(&self) -> f64 {
        goal_progress(&self.objects, &self.goal)
    }

    pub fn is_done(&self) -> bool {
        self.goal_progress() >= 1.0 || self.tick >= self.horizon
    }

    /// Where an object physically is: its own cell, or the position of
    /// whatever carries it.
    pub fn root_position(&self, id: ObjectId) -> Option<Position> {
        let mut loc = self.objects.get(&id)?.location;
        for _ in 0..=self.objects.len() {
            match loc {
                Location::InRoom { room, cell } => return Some(Position { room, cell }),
                Location::Held { agent, .. } => return self.agents.get(agent.0).map(|a| a.position),
                Location::OnSurface(p) | Location::InContainer(p) => loc = self.objects.get(&p)?.location,
            }
        }
        None
    }

    /// The agent holding `id`, directly or through a carried container.
    fn carrier(&self, id: ObjectId) -> Option<AgentId> {
        let mut loc = self.objects.get(&id)?.location;
        for _ in 0..=self.objects.len() {
            match loc {
                Location::Held { agent, .. } => return Some(agent),
                Location::OnSurface(p) | Location::InContainer(p) => loc = self.objects.get(&p)?.location,
                Location::InRoom { .. } => return None,
            }
        }
        None
    }

    /// No closed container between the object and the room.
    fn is_exposed(&self, id: ObjectId) -> bool {
        let Some(mut loc) = self.objects.get(&id).map(|o| o.location) else { return false };
        for _ in 0..=self.objects.len() {
            match loc {
                Location::InContainer(c) => match self.objects.get(&c) {
                    Some(container) if container.is_accessible() => loc = container.location,
                    _ => return false,
                },
                Location::OnSurface(s) => match self.objects.get(&s) {
                    Some(surface) => loc = surface.location,
                    None => return false,
                },
                _ => return true,
            }
        }
        false
    }

    pub fn is_visible_to(&self, agent: AgentId, id: ObjectId) -> bool {
        let (Some(body), Some(pos)) = (self.agents.get(agent.0), self.root_position(id)) else {
            return false;
        };
        pos.room == body.position.room && self.is_exposed(id)
    }

    pub fn is_near(&self, agent: AgentId, id: ObjectId) -> bool {
        if !self.is_visible_to(agent, id) {
            return false;
        }
        let body = &self.agents[agent.0];
        if self.carrier(id) == Some(agent) {
            return true;
        }
        let pos = self.root_position(id).expect("visible implies located");
        pos.cell.manhattan(body.position.cell) <= 1
    }

    fn contents_count(&self, container: ObjectId) -> usize {
        self.objects
            .values()
            .filter(|o| !o.is_container && o.location == Location::InContainer(container))
            .count()
    }

    /// Destination and BFS distance of a walk.
    pub fn walk_destination(&self, agent: AgentId, target: WalkTarget) -> Result<(u32, Position), FailReason> {
        let body = self.agents.get(agent.0).ok_or(FailReason::UnknownTarget)?;
        let layout = self.layout();
        match target {
            WalkTarget::Room(room) => {
                let anchor = layout.room(room).ok_or(FailReason::UnknownTarget)?.anchor();
                let goal = Position { room, cell: anchor };
                let dist = layout.distances_from(body.position);
                let idx = layout.index_of(goal).ok_or(FailReason::Unreachable)?;
                match dist[idx] {
                    u32::MAX => Err(FailReason::Unreachable),
                    d => Ok((d, goal)),
                }
            }
            WalkTarget::Object(id) => {
                if !self.objects.contains_key(&id) {
                    return Err(FailReason::UnknownTarget);
                }
                if self.carrier(id) == Some(agent) {
                    return Err(FailReason::AlreadyHeld);
                }
                let at = self.root_position(id).ok_or(FailReason::UnknownTarget)?;
                layout
                    .nearest(body.position, |p| p.room == at.room && p.cell.manhattan(at.cell) <= 1)
                    .ok_or(FailReason::Unreachable)
            }
        }
    }

    /// Ground-truth tick cost of an action for `agent`.
    pub fn true_cost(&self, agent: AgentId, action: &EnvAction) -> Result<u32, WorldError> {
        self.agent(agent)?;
        match action {
            EnvAction::WalkTowards(target) => match self.walk_destination(agent, *target) {
                Ok((d, _)) => Ok(d.max(1)),
                Err(FailReason::Unreachable) => Err(WorldError::UnreachableTarget),
                Err(reason) => Err(WorldError::InvalidAction(format!("{action:?}: {reason:?}"))),
            },
            _ => Ok(MANIPULATION_COST),
        }
    }

    /// Cost charged for an attempt, successful or not.
    fn attempt_cost(&self, agent: AgentId, action: &EnvAction) -> u32 {
        self.true_cost(agent, action).unwrap_or(MANIPULATION_COST)
    }

    /// Precondition check shared by `available_actions` and `step`.
    pub fn check(&self, agent: AgentId, action: &EnvAction) -> Result<(), FailReason> {
        let body = self.agents.get(agent.0).ok_or(FailReason::UnknownTarget)?;
        let get = |id: &ObjectId| self.objects.get(id).ok_or(FailReason::UnknownTarget);
        let holds = |id: &ObjectId| body.hands.contains(&Some(*id));
        match action {
            EnvAction::NoOp => Ok(()),
            EnvAction::WalkTowards(target) => self.walk_destination(agent, *target).map(|_| ()),
            EnvAction::Grasp(id) => {
                let obj = get(id)?;
                if !obj.portable {
                    return Err(FailReason::NotPortable);
                }
                if holds(id) {
                    return Err(FailReason::AlreadyHeld);
                }
                if let Some(other) = self.carrier(*id) {
                    if other != agent || matches!(obj.location, Location::Held { .. }) {
                        return Err(FailReason::AlreadyHeld);
                    }
                }
                if !self.is_visible_to(agent, *id) {
                    return Err(FailReason::NotVisible);
                }
                if !self.is_near(agent, *id) {
                    return Err(FailReason::NotNear);
                }
                body.free_hand().map(|_| ()).ok_or(FailReason::HandsFull)
            }
            EnvAction::Open(id) | EnvAction::Close(id) => {
                let obj = get(id)?;
                if !obj.is_openable {
                    return Err(FailReason::NotOpenable);
                }
                match (action, obj.open) {
                    (EnvAction::Open(_), true) => return Err(FailReason::AlreadyOpen),
                    (EnvAction::Close(_), false) => return Err(FailReason::AlreadyClosed),
                    _ => {}
                }
                if !self.is_visible_to(agent, *id) {
                    return Err(FailReason::NotVisible);
                }
                if !self.is_near(agent, *id) {
                    return Err(FailReason::NotNear);
                }
                Ok(())
            }
            EnvAction::PutOn { object, surface } => {
                get(object)?;
                if !holds(object) {
                    return Err(FailReason::NotHeld);
                }
                if !get(surface)?.is_surface {
                    return Err(FailReason::NotSurface);
                }
                if !self.is_near(agent, *surface) {
                    return Err(FailReason::NotNear);
                }
                Ok(())
            }
            EnvAction::PutIn { object, container } => {
                let obj = get(object)?;
                if !holds(object) {
                    return Err(FailReason::NotHeld);
                }
                let c = get(container)?;
                if !c.is_container || container == object || obj.is_container {
                    return Err(FailReason::NotContainer);
                }
                if !c.is_accessible() {
                    return Err(FailReason::Closed);
                }
                if !holds(container) {
                    if let Some(other) = self.carrier(*container) {
                        if other != agent {
                            return Err(FailReason::AlreadyHeld);
                        }
                    }
                    if !self.is_near(agent, *container) {
                        return Err(FailReason::NotNear);
                    }
                }
                if c.portable && self.contents_count(*container) >= CONTAINER_CAPACITY {
                    return Err(FailReason::ContainerFull);
                }
                Ok(())
            }
            EnvAction::Drop { hand } => match body.hands.get(*hand as usize) {
                Some(Some(_)) => Ok(()),
                _ => Err(FailReason::EmptyHand),
            },
        }
    }

    fn apply(&mut self, agent: AgentId, action: &EnvAction) {
        match *action {
            EnvAction::NoOp => {}
            EnvAction::WalkTowards(target) => {
                let (_, dest) = self.walk_destination(agent, target).expect("checked");
                self.agents[agent.0].position = dest;
            }
            EnvAction::Grasp(id) => {
                let hand = self.agents[agent.0].free_hand().expect("checked");
                self.agents[agent.0].hands[hand as usize] = Some(id);
                self.objects.get_mut(&id).expect("checked").location = Location::Held { agent, hand };
            }
            EnvAction::Open(id) => self.objects.get_mut(&id).expect("checked").open = true,
            EnvAction::Close(id) => self.objects.get_mut(&id).expect("checked").open = false,
            EnvAction::PutOn { object, surface } => self.release(agent, object, Location::OnSurface(surface)),
            EnvAction::PutIn { object, container } => self.release(agent, object, Location::InContainer(container)),
            EnvAction::Drop { hand } => {
                let object = self.agents[agent.0].hands[hand as usize].expect("checked");
                let pos = self.agents[agent.0].position;
                self.release(agent, object, Location::InRoom { room: pos.room, cell: pos.cell });
            }
        }
    }

    fn release(&mut self, agent: AgentId, object: ObjectId, to: Location) {
        for slot in self.agents[agent.0].hands.iter_mut() {
            if *slot == Some(object) {
                *slot = None;
            }
        }
        self.objects.get_mut(&object).expect("checked").location = to;
    }

    /// Advance one macro-step. Actions resolve in agent-id order; ill-situated
    /// ones fail without touching the world. The clock advances by the longest
    /// action, capped at the horizon; an action that cannot finish before the
    /// horizon fails with `OutOfTime`.
    pub fn step(&self, joint: &[EnvAction]) -> Result<StepOutcome, WorldError> {
        if joint.len() != self.agents.len() {
            return Err(WorldError::MalformedJointAction(format!(
                "expected {} actions, got {}",
                self.agents.len(),
                joint.len()
            )));
        }
        let mut next = self.clone();
        let mut costs = Vec::with_capacity(joint.len());
        let mut outcomes = Vec::with_capacity(joint.len());
        for (i, action) in joint.iter().enumerate() {
            let agent = AgentId(i);
            let cost = next.attempt_cost(agent, action);
            let verdict = if self.tick.saturating_add(cost) > self.horizon {
                Err(FailReason::OutOfTime)
            } else {
                next.check(agent, action)
            };
            if verdict.is_ok() {
                next.apply(agent, action);
            }
            costs.push(cost);
            outcomes.push(Some(ActionOutcome {
                action: *action,
                succeeded: verdict.is_ok(),
                failure: verdict.err(),
                cost,
            }));
        }
        let advance = costs.iter().copied().max().unwrap_or(MANIPULATION_COST);
        next.tick = self.tick.saturating_add(advance).min(self.horizon.max(self.tick));
        next.last_outcomes = outcomes;
        next.refresh_knowledge();
        let observations = next.observe_all();
        let reward = next.goal_progress();
        let done = reward >= 1.0 || next.tick >= next.horizon;
        Ok(StepOutcome { state: next, observations, reward, done, costs })
    }

    fn refresh_knowledge(&mut self) {
        for i in 0..self.agents.len() {
            let seen: Vec<(ObjectId, Location)> = self
                .objects
                .values()
                .filter(|o| self.is_visible_to(AgentId(i), o.id))
                .map(|o| (o.id, o.location))
                .collect();
            self.knowledge[i].extend(seen);
        }
    }

    pub fn observe_all(&self) -> Vec<Observation> {
        (0..self.agents.len()).map(|i| self.observe(AgentId(i))).collect()
    }

    pub fn observe(&self, agent: AgentId) -> Observation {
        let body = &self.agents[agent.0];
        let room = self.layout().room(body.position.room).expect("agent in a room");
        let visible = self
            .objects
            .values()
            .filter(|o| self.is_visible_to(agent, o.id))
            .map(|o| VisibleObject {
                id: o.id,
                class: o.class.clone(),
                location: o.location,
                portable: o.portable,
                open: o.is_openable.then_some(o.open),
            })
            .collect();
        let holding = body.hands.map(|h| h.map(|id| (id, self.objects[&id].class.clone())));
        let known = &self.knowledge[agent.0];
        let parent = |id: ObjectId| {
            let loc = *known.get(&id)?;
            let o = self.objects.get(&id)?;
            Some((loc, o.portable && o.is_container))
        };
        let progress = self
            .goal
            .iter()
            .map(|pred| {
                let satisfied = known
                    .iter()
                    .filter(|(id, loc)| {
                        let o = &self.objects[id];
                        o.portable && satisfies(pred, &o.class, **loc, parent)
                    })
                    .count() as u32;
                PredicateProgress {
                    predicate: pred.clone(),
                    target_class: self.objects[&pred.target].class.clone(),
                    satisfied: satisfied.min(pred.count),
                }
            })
            .collect();
        let last = self.last_outcomes.get(agent.0).cloned().flatten();
        Observation {
            agent_id: agent,
            agent_name: body.name.clone(),
            tick: self.tick,
            room: room.id,
            room_name: room.name().to_string(),
            cell: body.position.cell,
            visible,
            holding,
            progress,
            inbox: Vec::new(),
            last_action_text: last.as_ref().map(|o| self.render_action(&o.action)),
            last_action: last,
        }
    }

    pub fn room_label(&self, room: RoomId) -> String {
        match self.layout().room(room) {
            Some(r) => format!("<{}> ({})", r.name(), r.id),
            None => format!("<room> ({room})"),
        }
    }

    pub fn object_label(&self, id: ObjectId) -> String {
        match self.objects.get(&id) {
            Some(o) => o.label(),
            None => format!("<object> ({id})"),
        }
    }

    /// Text form of an action, objects written as `<name> (id)`.
    pub fn render_action(&self, action: &EnvAction) -> String {
        match *action {
            EnvAction::WalkTowards(WalkTarget::Object(id)) => format!("walk towards {}", self.object_label(id)),
            EnvAction::WalkTowards(WalkTarget::Room(room)) => format!("walk towards {}", self.room_label(room)),
            EnvAction::Grasp(id) => format!("grasp {}", self.object_label(id)),
            EnvAction::Open(id) => format!("open {}", self.object_label(id)),
            EnvAction::Close(id) => format!("close {}", self.object_label(id)),
            EnvAction::PutOn { object, surface } => {
                format!("put {} on {}", self.object_label(object), self.object_label(surface))
            }
            EnvAction::PutIn { object, container } => {
                format!("put {} in {}", self.object_label(object), self.object_label(container))
            }
            EnvAction::Drop { hand } => format!("drop hand {hand}"),
            EnvAction::NoOp => "wait".to_string(),
        }
    }

    /// Room in which `agent` last saw `id`, following what it knows of the
    /// carriers. `None` when the chain leaves its knowledge.
    pub fn believed_room(&self, agent: AgentId, id: ObjectId) -> Option<RoomId> {
        let known = self.knowledge.get(agent.0)?;
        let mut loc = *known.get(&id)?;
        for _ in 0..=known.len() {
            match loc {
                Location::InRoom { room, .. } => return Some(room),
                Location::Held { agent: a, .. } => return (a == agent).then(|| self.agents[agent.0].position.room),
                Location::OnSurface(p) | Location::InContainer(p) => loc = *known.get(&p)?,
            }
        }
        None
    }

    /// Like `render_action`, but from `agent`'s point of view: drops name the
    /// held object and object walks name the room the agent believes the
    /// object is in.
    pub fn render_action_for(&self, agent: AgentId, action: &EnvAction) -> String {
        match *action {
            EnvAction::Drop { hand } => {
                if let Some(Some(id)) = self.agents.get(agent.0).and_then(|a| a.hands.get(hand as usize)) {
                    return format!("drop {}", self.object_label(*id));
                }
            }
            EnvAction::WalkTowards(WalkTarget::Object(id)) => {
                if let Some(room) = self.believed_room(agent, id) {
                    return format!("walk towards {} in {}", self.object_label(id), self.room_label(room));
                }
            }
            _ => {}
        }
        self.render_action(action)
    }

    /// Every action whose precondition holds for `agent`, sorted by text.
    pub fn available_actions(&self, agent: AgentId) -> Vec<EnvAction> {
        let Some(body) = self.agents.get(agent.0) else { return Vec::new() };
        let mut out: BTreeSet<EnvAction> = BTreeSet::new();
        out.insert(EnvAction::NoOp);
        for room in self.layout().rooms() {
            out.insert(EnvAction::WalkTowards(WalkTarget::Room(room.id)));
        }
        for id in self.knowledge[agent.0].keys() {
            out.insert(EnvAction::WalkTowards(WalkTarget::Object(*id)));
        }
        let near: Vec<ObjectId> = self.objects.keys().copied().filter(|id| self.is_near(agent, *id)).collect();
        for &id in &near {
            out.insert(EnvAction::Grasp(id));
            out.insert(EnvAction::Open(id));
            out.insert(EnvAction::Close(id));
        }
        let held: Vec<ObjectId> = body.held().collect();
        for &h in &held {
            for &target in near.iter().chain(held.iter()) {
                out.insert(EnvAction::PutOn { object: h, surface: target });
                out.insert(EnvAction::PutIn { object: h, container: target });
            }
        }
        for hand in 0..2u8 {
            out.insert(EnvAction::Drop { hand });
        }
        let mut actions: Vec<(String, EnvAction)> = out
            .into_iter()
            .filter(|a| self.check(agent, a).is_ok())
            .map(|a| (self.render_action_for(agent, &a), a))
            .collect();
        actions.sort();
        actions.into_iter().map(|(_, a)| a).collect()
    }
}
