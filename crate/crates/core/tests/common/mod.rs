//! Independent oracles shared by the integration tests. Nothing here calls
//! the simulator's own search or predicate code.
#![allow(dead_code)]

pub mod stub;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use liet_core::world::{
    AgentId, EnvAction, Location, ObjectId, ObjectInstance, Position, Relation, RoomGraph, RoomId, Task, WalkTarget,
    WorldState, CONTAINER_CAPACITY,
};
use rand::seq::SliceRandom;
use rand::Rng;

/// Walkable cells of one room, straight from the room description.
fn walkable(graph: &RoomGraph, room: RoomId, x: i32, y: i32) -> bool {
    graph.rooms.iter().any(|r| {
        r.id == room
            && x >= 0
            && y >= 0
            && (x as u16) < r.width
            && (y as u16) < r.height
            && !r.blocked.iter().any(|c| c.x as i32 == x && c.y as i32 == y)
    })
}

/// Flood fill over (room, x, y) with unit steps and door jumps.
pub fn flood_fill(graph: &RoomGraph, from: Position) -> BTreeMap<(u32, u16, u16), u32> {
    let mut dist = BTreeMap::new();
    let start = (from.room.0, from.cell.x, from.cell.y);
    dist.insert(start, 0);
    let mut queue = VecDeque::from([start]);
    while let Some((room, x, y)) = queue.pop_front() {
        let d = dist[&(room, x, y)];
        let mut next = Vec::new();
        for (dx, dy) in [(0, 1), (1, 0), (0, -1), (-1, 0)] {
            let (nx, ny) = (x as i32 + dx, y as i32 + dy);
            if walkable(graph, RoomId(room), nx, ny) {
                next.push((room, nx as u16, ny as u16));
            }
        }
        for door in &graph.doors {
            if door.a.0 == room && door.a_cell.x == x && door.a_cell.y == y {
                next.push((door.b.0, door.b_cell.x, door.b_cell.y));
            }
            if door.b.0 == room && door.b_cell.x == x && door.b_cell.y == y {
                next.push((door.a.0, door.a_cell.x, door.a_cell.y));
            }
        }
        for n in next {
            if !dist.contains_key(&n) {
                dist.insert(n, d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Follow parents until a room cell or a hand.
pub fn physical_position(state: &WorldState, id: ObjectId) -> Option<Position> {
    let mut seen = BTreeSet::new();
    let mut cur = id;
    loop {
        if !seen.insert(cur) {
            return None;
        }
        match state.objects.get(&cur)?.location {
            Location::InRoom { room, cell } => return Some(Position { room, cell }),
            Location::Held { agent, .. } => return Some(state.agents[agent.0].position),
            Location::OnSurface(p) | Location::InContainer(p) => cur = p,
        }
    }
}

fn held_by(state: &WorldState, id: ObjectId, agent: AgentId) -> bool {
    let mut cur = id;
    for _ in 0..=state.objects.len() {
        match state.objects[&cur].location {
            Location::Held { agent: a, .. } => return a == agent,
            Location::OnSurface(p) | Location::InContainer(p) => cur = p,
            Location::InRoom { .. } => return false,
        }
    }
    false
}

/// Expected cost of a walk, or `None` when the walk is not possible.
pub fn oracle_walk_cost(state: &WorldState, agent: AgentId, target: WalkTarget) -> Option<u32> {
    let graph = state.layout().graph();
    let dist = flood_fill(graph, state.agents[agent.0].position);
    let d = match target {
        WalkTarget::Room(room) => {
            let r = graph.rooms.iter().find(|r| r.id == room)?;
            let anchor = r.anchor();
            *dist.get(&(room.0, anchor.x, anchor.y))?
        }
        WalkTarget::Object(id) => {
            if !state.objects.contains_key(&id) || held_by(state, id, agent) {
                return None;
            }
            let at = physical_position(state, id)?;
            dist.iter()
                .filter(|((room, x, y), _)| {
                    *room == at.room.0 && (*x as i32 - at.cell.x as i32).abs() + (*y as i32 - at.cell.y as i32).abs() <= 1
                })
                .map(|(_, d)| *d)
                .min()?
        }
    };
    Some(d.max(1))
}

/// Count goal instances by enumerating, for every portable object, the chain
/// of places it sits in and checking the predicate against each hop that a
/// portable container could carry it through.
pub fn brute_force_progress(state: &WorldState) -> f64 {
    let objects = &state.objects;
    let total: u32 = state.goal.iter().map(|g| g.count).sum();
    if total == 0 {
        return 1.0;
    }
    let mut satisfied = 0;
    for pred in &state.goal {
        let mut n = 0;
        for o in objects.values().filter(|o| o.portable && o.class == pred.object_class) {
            // Hops: (relation, parent) pairs; only the first hop or hops
            // reached through portable containers count.
            let mut hops: Vec<(Relation, ObjectId)> = Vec::new();
            let mut loc = o.location;
            loop {
                let (rel, parent) = match loc {
                    Location::OnSurface(p) => (Relation::On, p),
                    Location::InContainer(p) => (Relation::In, p),
                    _ => break,
                };
                hops.push((rel, parent));
                let Some(p) = objects.get(&parent) else { break };
                if !(rel == Relation::In && p.portable && p.is_container) || hops.len() > objects.len() {
                    break;
                }
                loc = p.location;
            }
            if hops.iter().any(|(rel, parent)| *rel == pred.relation && *parent == pred.target) {
                n += 1;
            }
        }
        satisfied += n.min(pred.count);
    }
    satisfied as f64 / total as f64
}

/// Conservation and capacity. Returns a description of the first violation.
pub fn check_invariants(state: &WorldState, ids: &BTreeSet<ObjectId>) -> Result<(), String> {
    let now: BTreeSet<ObjectId> = state.objects.keys().copied().collect();
    if &now != ids {
        return Err(format!("object set changed: {ids:?} -> {now:?}"));
    }
    let mut in_hand = BTreeMap::new();
    for body in &state.agents {
        for (h, slot) in body.hands.iter().enumerate() {
            if let Some(id) = slot {
                if in_hand.insert(*id, (body.agent_id, h as u8)).is_some() {
                    return Err(format!("{id} held twice"));
                }
            }
        }
        if body.hands.iter().flatten().count() > 2 {
            return Err(format!("{} holds more than two", body.name));
        }
    }
    let mut contents: BTreeMap<ObjectId, usize> = BTreeMap::new();
    for o in state.objects.values() {
        match o.location {
            Location::Held { agent, hand } => {
                if in_hand.get(&o.id) != Some(&(agent, hand)) {
                    return Err(format!("{} claims a hand that does not hold it", o.id));
                }
            }
            Location::InContainer(p) | Location::OnSurface(p) => {
                if !state.objects.contains_key(&p) || p == o.id {
                    return Err(format!("{} has a bad parent {p}", o.id));
                }
                if matches!(o.location, Location::InContainer(_)) && !o.is_container {
                    *contents.entry(p).or_default() += 1;
                }
            }
            Location::InRoom { room, cell } => {
                if !state.layout().is_walkable(Position { room, cell }) {
                    return Err(format!("{} sits on an unwalkable cell", o.id));
                }
            }
        }
        if physical_position(state, o.id).is_none() {
            return Err(format!("{} has no physical position", o.id));
        }
    }
    for (id, _) in in_hand {
        if !matches!(state.objects[&id].location, Location::Held { .. }) {
            return Err(format!("{id} in a hand but not located there"));
        }
    }
    for (c, n) in contents {
        let parent = &state.objects[&c];
        if parent.portable && n > CONTAINER_CAPACITY {
            return Err(format!("container {c} holds {n}"));
        }
    }
    Ok(())
}

/// Any action: mostly valid ones, sometimes arbitrary ids to force failures.
pub fn random_action(state: &WorldState, agent: AgentId, rng: &mut impl Rng) -> EnvAction {
    if rng.gen_bool(0.8) {
        let avail = state.available_actions(agent);
        return *avail.choose(rng).expect("wait is always available");
    }
    let ids: Vec<ObjectId> = state.objects.keys().copied().collect();
    let mut id = || if rng.gen_bool(0.1) { ObjectId(999) } else { *ids.choose(rng).unwrap() };
    let (a, b) = (id(), id());
    match rng.gen_range(0..7) {
        0 => EnvAction::Grasp(a),
        1 => EnvAction::Open(a),
        2 => EnvAction::Close(a),
        3 => EnvAction::PutOn { object: a, surface: b },
        4 => EnvAction::PutIn { object: a, container: b },
        5 => EnvAction::Drop { hand: rng.gen_range(0..2) },
        _ => EnvAction::WalkTowards(WalkTarget::Object(a)),
    }
}

pub fn random_joint(state: &WorldState, rng: &mut impl Rng) -> Vec<EnvAction> {
    (0..state.n_agents()).map(|i| random_action(state, AgentId(i), rng)).collect()
}

/// Scramble the placement of portable objects so that goals are partially
/// and sometimes fully satisfied. Containers only go on fixed furniture or
/// the floor, which keeps the parent chain acyclic.
pub fn scramble(state: &mut WorldState, rng: &mut impl Rng) {
    let fixed: Vec<&ObjectInstance> = state.objects.values().filter(|o| !o.portable).collect();
    let surfaces: Vec<ObjectId> = fixed.iter().filter(|o| o.is_surface).map(|o| o.id).collect();
    let receptacles: Vec<ObjectId> = fixed.iter().filter(|o| o.is_container).map(|o| o.id).collect();
    let containers: Vec<ObjectId> =
        state.objects.values().filter(|o| o.portable && o.is_container).map(|o| o.id).collect();
    let targets: Vec<ObjectId> = state.goal.iter().map(|g| g.target).collect();
    let held: BTreeSet<ObjectId> = state.agents.iter().flat_map(|a| a.held()).collect();
    let mut load: BTreeMap<ObjectId, usize> = BTreeMap::new();
    let movable: Vec<ObjectId> =
        state.objects.values().filter(|o| o.portable && !held.contains(&o.id)).map(|o| o.id).collect();
    for id in movable {
        let is_container = state.objects[&id].is_container;
        let loc = match rng.gen_range(0..5) {
            0 if !targets.is_empty() => {
                let t = *targets.choose(rng).unwrap();
                if is_container && state.objects[&t].portable {
                    continue;
                }
                if state.objects[&t].is_surface {
                    Location::OnSurface(t)
                } else {
                    Location::InContainer(t)
                }
            }
            1 if !surfaces.is_empty() => Location::OnSurface(*surfaces.choose(rng).unwrap()),
            2 if !receptacles.is_empty() => Location::InContainer(*receptacles.choose(rng).unwrap()),
            3 if !is_container && !containers.is_empty() => {
                let c = *containers.choose(rng).unwrap();
                if load.get(&c).copied().unwrap_or(0) < CONTAINER_CAPACITY {
                    *load.entry(c).or_default() += 1;
                    Location::InContainer(c)
                } else {
                    continue;
                }
            }
            _ => continue,
        };
        state.objects.get_mut(&id).unwrap().location = loc;
    }
}

pub fn builtin(id: &str) -> Task {
    liet_core::world::builtin_task(id).expect("built-in task")
}

pub fn all_tasks() -> Vec<Task> {
    liet_core::world::BUILTIN_TASKS.iter().map(|(id, _)| builtin(id)).collect()
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Largest relative error between the analytic gradient of the squared-error
/// objective and central finite differences, on one random instance with
/// `dim` inputs and `n` samples.
pub fn gradient_check(seed: u64, dim: usize, n: usize) -> f64 {
    use liet_core::utility::{FeatureVector, Objective, ValueHead};
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut head = ValueHead::random(dim, liet_core::utility::HIDDEN, seed);
    let xs: Vec<FeatureVector> = (0..n)
        .map(|_| {
            let dense: Vec<f64> =
                (0..dim).map(|_| if rng.gen_bool(0.5) { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
            FeatureVector::from_dense(&dense)
        })
        .collect();
    let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..20.0)).collect();
    let (mean, scale) = (rng.gen_range(0.0..5.0), rng.gen_range(0.5..3.0));
    let batch: Vec<(&FeatureVector, f64)> = xs.iter().zip(ys.iter().copied()).collect();
    let mut analytic = vec![0.0; head.params.len()];
    Objective { head: &head, label_mean: mean, label_scale: scale }.loss_and_grad(&batch, &mut analytic);

    // The loss is written out here rather than taken from the library.
    let loss = |h: &ValueHead| -> f64 {
        batch.iter().map(|(x, y)| (mean + scale * h.output(x) - y).powi(2)).sum::<f64>() / n as f64
    };
    let eps = 1e-6;
    let mut numeric = vec![0.0; head.params.len()];
    for i in 0..head.params.len() {
        let p = head.params[i];
        head.params[i] = p + eps;
        let up = loss(&head);
        head.params[i] = p - eps;
        let down = loss(&head);
        head.params[i] = p;
        numeric[i] = (up - down) / (2.0 * eps);
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let size: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    if size == 0.0 {
        0.0
    } else {
        diff / size
    }
}

/// Communication invariants of one recorded episode: every message reaches
/// each teammate exactly once in the following macro-step, inboxes arrive
/// ordered by (tick, sender), knowledge versions run without gaps and stay
/// within 100 words, and all agents hold the same dialogue at every step.
pub fn check_protocol(record: &liet_core::harness::EpisodeRecord) -> Result<(), String> {
    let n = record.header.task.n_agents;
    let mut version = record.header.initial_knowledge.version;
    let mut pending: Vec<liet_core::Message> = Vec::new();
    let mut last_tick = None;
    for (i, event) in record.events.iter().enumerate() {
        if last_tick.is_some_and(|t| event.tick <= t) {
            return Err(format!("event {i}: ticks not increasing"));
        }
        last_tick = Some(event.tick);
        if event.tick_after > record.header.task.horizon {
            return Err(format!("event {i}: past the horizon"));
        }
        // Exactly-once delivery of last step's messages.
        let mut expected: Vec<(usize, usize, u32)> = Vec::new();
        for m in &pending {
            for r in (0..n).filter(|r| *r != m.sender.0) {
                expected.push((r, m.sender.0, m.tick));
            }
        }
        let mut got: Vec<(usize, usize, u32)> =
            event.deliveries.iter().map(|d| (d.recipient.0, d.sender.0, d.tick)).collect();
        for r in 0..n {
            let inbox: Vec<(u32, usize)> =
                got.iter().filter(|d| d.0 == r).map(|d| (d.2, d.1)).collect();
            if inbox.windows(2).any(|w| w[0] > w[1]) {
                return Err(format!("event {i}: inbox of agent {r} out of order"));
            }
        }
        expected.sort();
        got.sort();
        if expected != got {
            return Err(format!("event {i}: deliveries {got:?}, expected {expected:?}"));
        }
        if event.dialogue_digests.len() != n || event.dialogue_digests.windows(2).any(|w| w[0] != w[1]) {
            return Err(format!("event {i}: dialogue differs across agents"));
        }
        for update in &event.knowledge_updates {
            if update.version != version + 1 {
                return Err(format!("event {i}: version {} after {version}", update.version));
            }
            version = update.version;
            let words = update.text.split_whitespace().count();
            if words > 100 {
                return Err(format!("event {i}: knowledge list has {words} words"));
            }
        }
        if event.knowledge_version != version {
            return Err(format!("event {i}: reported version {} but {version} applied", event.knowledge_version));
        }
        pending = event.messages.clone();
    }
    if record.footer.undelivered_messages as usize != pending.len() * (n - 1) {
        return Err("undelivered count does not match the final step's messages".into());
    }
    if record.footer.knowledge.version != version {
        return Err("footer knowledge version disagrees with updates".into());
    }
    Ok(())
}

/// Scripted backend, no learned model.
pub fn scripted_resources() -> liet_core::harness::Resources {
    liet_core::harness::Resources::new(std::sync::Arc::new(liet_core::ScriptedBackend::new("default").unwrap()))
}

/// Canonical fixture bindings for the three shipped templates.
pub fn fixture_bindings() -> BTreeMap<String, String> {
    [
        ("AGENT_NAME", "Alice"),
        ("OPPO_NAME", "Bob"),
        ("GOAL", "1 x ON(<apple>, <dinnertable> (23))"),
        ("PROGRESS", "0/1 of ON(<apple>, <dinnertable> (23)). I'm in <kitchen> (1000)."),
        ("DIALOGUE_HISTORY", "Alice: \"I found <apple> (106).\""),
        ("ACTION_HISTORY", "walk towards <kitchen> (1000) (succeeded)"),
        ("AVAILABLE_ACTIONS", "- grasp <apple> (106)\n- wait"),
        ("KNOWLEDGE_LIST", "- Include object locations."),
        ("CURRENT_PLANS", "Bob was working on \"open <fridge> (11)\"."),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Render each shipped template with the fixture and compare against its
/// golden file byte for byte. Returns the names that differ.
pub fn golden_mismatches() -> Vec<String> {
    use liet_core::llm::{render_template, PromptTemplate, TemplateName};
    let all = fixture_bindings();
    let mut bad = Vec::new();
    for (name, file) in [
        (TemplateName::Planner, "planner.txt"),
        (TemplateName::MessageGenerator, "message_generator.txt"),
        (TemplateName::Reflector, "reflector.txt"),
    ] {
        let template = PromptTemplate::builtin(name);
        let bindings: BTreeMap<String, String> =
            all.iter().filter(|(k, _)| template.required.contains(*k)).map(|(k, v)| (k.clone(), v.clone())).collect();
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(file);
        let golden = std::fs::read(&path).unwrap_or_default();
        match render_template(&template, &bindings, true) {
            Ok(text) if text.as_bytes() == golden.as_slice() => {}
            _ => bad.push(file.to_string()),
        }
    }
    bad
}
