//! Deterministic rule-based stand-in for a language model.
//!
//! The scripted backend reads nothing but the prompt text. It recognises the
//! three prompt kinds by their request sentence and answers each with a fixed
//! rule set:
//!
//! * planner: finish what can be finished now, otherwise collect goal objects
//!   or deliver held ones, otherwise explore; within a tier the cheapest
//!   annotated action wins, ties broken by text.
//! * message generator: an opening room split, then status reports extended
//!   by whatever the knowledge list asks for.
//! * reflector: adds a tip for every useful field the last received message
//!   lacked.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;

use super::backend::{Backend, BackendError, BackendErrorKind, Completion, CompletionRequest};
use super::template::{COST_ESTIMATION_INSTRUCTION, GREETINGS, KNOWLEDGE_DELIMITER};
use crate::agent::{
    split_names, CONTAINERS_PREFIX, CONTAINER_CLASSES, EXPLORED_PREFIX, HOLDING_PREFIX, IN_PLACE_PREFIX, NONE,
    NOTHING, ROOM_PREFIX, SEEN_PREFIX, TARGETS_PREFIX, UNEXPLORED_PREFIX, UNOPENED_PREFIX,
};

pub const RULESETS: &[&str] = &["default"];

/// Tips the reflector writes; each carries the keyword the message rules
/// look for.
pub const TIP_LOCATIONS: &str =
    "Include object locations: name each goal object with its room, like <apple> (31) in <kitchen> (1000).";
pub const TIP_HANDLING: &str = "Say which objects you are handling so teammates avoid duplicate work.";
pub const TIP_SPLIT: &str = "Propose a clear labor split: say which rooms you will search next.";
pub const TIP_FAILURES: &str = "Report failed actions and what blocked them.";

const KEY_LOCATIONS: &str = "object locations";
const KEY_HANDLING: &str = "handling";
const KEY_SPLIT: &str = "labor split";
const KEY_FAILURES: &str = "failed";

/// Costs assumed when the prompt asks the planner to estimate them itself.
const GUESS_ROOM_WALK: f64 = 10.0;
const GUESS_NEAR_WALK: f64 = 3.0;
const GUESS_FAR_WALK: f64 = 12.0;
const GUESS_OTHER: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedBackend {
    ruleset: String,
}

impl ScriptedBackend {
    pub fn new(ruleset: &str) -> Result<Self, BackendError> {
        if !RULESETS.contains(&ruleset) {
            return Err(BackendError::new(BackendErrorKind::InvalidRequest, format!("unknown scripted ruleset {ruleset:?}")));
        }
        Ok(ScriptedBackend { ruleset: ruleset.to_string() })
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        request.validate()?;
        Ok(Completion { text: scripted_reply(&request.prompt), retries: 0 })
    }

    fn describe(&self) -> String {
        format!("scripted:{}", self.ruleset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Planner,
    MessageGenerator,
    Reflector,
}

pub fn prompt_kind(prompt: &str) -> Option<PromptKind> {
    if prompt.contains("choose the best available action") {
        Some(PromptKind::Planner)
    } else if prompt.contains("generate a short message") {
        Some(PromptKind::MessageGenerator)
    } else if prompt.contains("update the knowledge list") {
        Some(PromptKind::Reflector)
    } else {
        None
    }
}

/// The reply the default rule set gives to `prompt`.
pub fn scripted_reply(prompt: &str) -> String {
    let Some(kind) = prompt_kind(prompt) else { return String::new() };
    let view = PromptView::parse(prompt);
    match kind {
        PromptKind::Planner => plan(&view),
        PromptKind::MessageGenerator => compose_message(&view),
        PromptKind::Reflector => reflect(&view),
    }
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("regex"))
}

fn label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"<([^<>]+)> \((\d+)\)")
}

/// `<name> (id)` pairs in order.
fn labels(text: &str) -> Vec<(String, u64)> {
    label_re().captures_iter(text).filter_map(|c| Some((c[1].to_string(), c[2].parse().ok()?))).collect()
}

fn label(name: &str, id: u64) -> String {
    format!("<{name}> ({id})")
}

#[derive(Debug, Clone, PartialEq)]
struct Pred {
    done: u32,
    count: u32,
    relation: String,
    class: String,
    target: u64,
}

/// An object with the room it was reported in.
#[derive(Debug, Clone, PartialEq)]
struct Placed {
    class: String,
    id: u64,
    room: Option<(String, u64)>,
}

impl Placed {
    fn text(&self) -> String {
        match &self.room {
            Some((name, id)) => format!("{} in {}", label(&self.class, self.id), label(name, *id)),
            None => label(&self.class, self.id),
        }
    }
}

fn placed_list(section: &str) -> Vec<Placed> {
    section
        .split("; ")
        .filter_map(|item| {
            let l = labels(item);
            let (class, id) = l.first()?.clone();
            Some(Placed { class, id, room: l.get(1).cloned() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct Hand {
    class: String,
    id: u64,
    contents: Vec<(String, u64)>,
}

#[derive(Debug, Clone, Default)]
struct Progress {
    preds: Vec<Pred>,
    room: Option<(String, u64)>,
    hands: Vec<Option<Hand>>,
    explored: Vec<(String, u64)>,
    unexplored: Vec<(String, u64)>,
    seen: Vec<Placed>,
    in_place: BTreeSet<u64>,
    unopened: Vec<Placed>,
    containers: Vec<Placed>,
    targets: Vec<Placed>,
}

impl Progress {
    fn parse(text: &str) -> Self {
        static PRED: OnceLock<Regex> = OnceLock::new();
        let pred_re = re(&PRED, r"(\d+)/(\d+) of (ON|IN)\(<([^<>]+)>, <[^<>]+> \((\d+)\)\)");
        let mut p = Progress {
            preds: pred_re
                .captures_iter(text)
                .map(|c| Pred {
                    done: c[1].parse().unwrap_or(0),
                    count: c[2].parse().unwrap_or(0),
                    relation: c[3].to_string(),
                    class: c[4].to_string(),
                    target: c[5].parse().unwrap_or(0),
                })
                .collect(),
            ..Default::default()
        };
        for sentence in text.split(". ") {
            let s = sentence.trim_end_matches('.');
            let body = |prefix: &str| s.strip_prefix(prefix).filter(|b| *b != NONE);
            if let Some(b) = s.strip_prefix(ROOM_PREFIX) {
                p.room = labels(b).into_iter().next();
            } else if let Some(b) = s.strip_prefix(HOLDING_PREFIX) {
                p.hands = b
                    .split("; ")
                    .map(|h| {
                        if h == NOTHING {
                            return None;
                        }
                        let (head, rest) = h.split_once(" with ").unwrap_or((h, ""));
                        let (class, id) = labels(head).into_iter().next()?;
                        Some(Hand { class, id, contents: labels(rest) })
                    })
                    .collect();
            } else if s.starts_with(EXPLORED_PREFIX) {
                p.explored = body(EXPLORED_PREFIX).map(labels).unwrap_or_default();
            } else if s.starts_with(UNEXPLORED_PREFIX) {
                p.unexplored = body(UNEXPLORED_PREFIX).map(labels).unwrap_or_default();
            } else if s.starts_with(SEEN_PREFIX) {
                p.seen = body(SEEN_PREFIX).map(placed_list).unwrap_or_default();
            } else if s.starts_with(IN_PLACE_PREFIX) {
                p.in_place = body(IN_PLACE_PREFIX).map(|b| labels(b).into_iter().map(|l| l.1).collect()).unwrap_or_default();
            } else if s.starts_with(UNOPENED_PREFIX) {
                p.unopened = body(UNOPENED_PREFIX).map(placed_list).unwrap_or_default();
            } else if s.starts_with(CONTAINERS_PREFIX) {
                p.containers = body(CONTAINERS_PREFIX).map(placed_list).unwrap_or_default();
            } else if s.starts_with(TARGETS_PREFIX) {
                p.targets = body(TARGETS_PREFIX).map(placed_list).unwrap_or_default();
            }
        }
        p
    }

    fn all_rooms(&self) -> Vec<(String, u64)> {
        let mut rooms: Vec<(String, u64)> = self.explored.iter().chain(&self.unexplored).cloned().collect();
        rooms.sort_by_key(|r| r.1);
        rooms.dedup();
        rooms
    }

    fn room_ids(&self) -> BTreeSet<u64> {
        self.all_rooms().into_iter().map(|r| r.1).collect()
    }

    /// Instances still missing per class.
    fn need(&self) -> BTreeMap<&str, u32> {
        let mut need = BTreeMap::new();
        for p in &self.preds {
            *need.entry(p.class.as_str()).or_insert(0) += p.count.saturating_sub(p.done);
        }
        need
    }

    fn held(&self) -> impl Iterator<Item = &Hand> {
        self.hands.iter().flatten()
    }

    fn free_hand(&self) -> bool {
        self.hands.iter().any(Option::is_none)
    }

    /// Classes carried, counting container contents.
    fn carried(&self) -> BTreeMap<String, u32> {
        let mut out = BTreeMap::new();
        for h in self.held() {
            *out.entry(h.class.clone()).or_insert(0) += 1;
            for (c, _) in &h.contents {
                *out.entry(c.clone()).or_insert(0) += 1;
            }
        }
        out
    }

    fn done(&self) -> (u32, u32) {
        (self.preds.iter().map(|p| p.done.min(p.count)).sum(), self.preds.iter().map(|p| p.count).sum())
    }

    fn hands_text(&self) -> String {
        let hands: Vec<String> = self
            .hands
            .iter()
            .map(|h| match h {
                Some(h) => label(&h.class, h.id),
                None => NOTHING.to_string(),
            })
            .collect();
        if hands.is_empty() {
            NOTHING.to_string()
        } else {
            hands.join(" and ")
        }
    }
}

#[derive(Debug, Clone)]
struct Said {
    speaker: String,
    text: String,
}

#[derive(Debug, Clone)]
struct Candidate {
    text: String,
    cost: Option<f64>,
}

impl Candidate {
    fn verb(&self) -> &str {
        self.text.split_whitespace().next().unwrap_or("")
    }

    fn ids(&self) -> Vec<u64> {
        labels(&self.text).into_iter().map(|l| l.1).collect()
    }

    fn first_id(&self) -> Option<u64> {
        self.ids().first().copied()
    }
}

/// What the rule set needs from a prompt.
#[derive(Debug, Clone, Default)]
struct PromptView {
    me: String,
    teammates: Vec<String>,
    transport: bool,
    progress: Progress,
    dialogue: Vec<Said>,
    previous_actions: String,
    candidates: Vec<Candidate>,
    guess_costs: bool,
    knowledge: String,
    current_plans: String,
}

fn line_after<'a>(prompt: &'a str, prefix: &str) -> &'a str {
    prompt.lines().find_map(|l| l.strip_prefix(prefix)).unwrap_or("")
}

impl PromptView {
    fn parse(prompt: &str) -> Self {
        static ME: OnceLock<Regex> = OnceLock::new();
        static TEAM: OnceLock<Regex> = OnceLock::new();
        static SAID: OnceLock<Regex> = OnceLock::new();
        static COST: OnceLock<Regex> = OnceLock::new();
        let me = re(&ME, r"^I'm (.+?)\. I'm in a hurry").captures(prompt).map(|c| c[1].to_string()).unwrap_or_default();
        let teammates = re(&TEAM, r"with my (?:teammate|friend) (.+?) together")
            .captures(prompt)
            .map(|c| split_names(&c[1]))
            .unwrap_or_default();

        let mut dialogue = Vec::new();
        if let Some(start) = prompt.find(GREETINGS) {
            let said = re(&SAID, r#"^([^:"]+): "(.*)"$"#);
            for line in prompt[start + GREETINGS.len()..].lines() {
                if line.starts_with("Previous actions:") || line.starts_with("Here are some hints") {
                    break;
                }
                if let Some(c) = said.captures(line) {
                    dialogue.push(Said { speaker: c[1].to_string(), text: c[2].to_string() });
                }
            }
        }

        let mut candidates = Vec::new();
        if let Some(start) = prompt.find("Available actions: ") {
            let cost_re = re(&COST, r"^(.*) \(est\. cost: (-?\d+) steps\)$");
            for line in prompt[start + "Available actions: ".len()..].lines() {
                let Some(item) = line.strip_prefix("- ") else { break };
                candidates.push(match cost_re.captures(item) {
                    Some(c) => Candidate { text: c[1].to_string(), cost: c[2].parse().ok() },
                    None => Candidate { text: item.to_string(), cost: None },
                });
            }
        }

        let knowledge = if let Some(start) = prompt.find("previous experiences:\n") {
            let rest = &prompt[start + "previous experiences:\n".len()..];
            rest.split("\nNote: The generated message").next().unwrap_or("").to_string()
        } else {
            let parts: Vec<&str> = prompt.split(KNOWLEDGE_DELIMITER).collect();
            if parts.len() >= 3 {
                parts[1].trim_matches('\n').to_string()
            } else {
                String::new()
            }
        };

        PromptView {
            me,
            teammates,
            transport: prompt.contains("A container can carry"),
            progress: Progress::parse(line_after(prompt, "Progress: ")),
            dialogue,
            previous_actions: line_after(prompt, "Previous actions: ").to_string(),
            candidates,
            guess_costs: prompt.contains(COST_ESTIMATION_INSTRUCTION),
            knowledge,
            current_plans: line_after(prompt, "Current plans: ").to_string(),
        }
    }

    /// Everyone, in the canonical order used for splits and tie-breaks.
    fn team(&self) -> Vec<String> {
        let mut team: Vec<String> = self.teammates.iter().cloned().chain(std::iter::once(self.me.clone())).collect();
        team.sort();
        team.dedup();
        team
    }

    fn rank(&self, name: &str) -> usize {
        self.team().iter().position(|n| n == name).unwrap_or(usize::MAX)
    }

    fn latest_from(&self, name: &str) -> Option<&str> {
        self.dialogue.iter().rev().find(|s| s.speaker == name).map(|s| s.text.as_str())
    }

    /// Object ids each agent says it is handling, from its latest message.
    fn object_claims(&self) -> BTreeMap<u64, Vec<String>> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let handling = re(&RE, r"I'm handling ([^.]*)\.");
        let mut out: BTreeMap<u64, Vec<String>> = BTreeMap::new();
        for name in self.team() {
            if let Some(c) = self.latest_from(&name).and_then(|t| handling.captures(t)) {
                for (_, id) in labels(&c[1]) {
                    out.entry(id).or_default().push(name.clone());
                }
            }
        }
        out
    }

    /// Per class, how many objects teammates have claimed ahead of me.
    fn claimed_counts(&self, claims: &BTreeMap<u64, Vec<String>>) -> BTreeMap<String, u32> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let handling = re(&RE, r"I'm handling ([^.]*)\.");
        let mut classes = BTreeMap::new();
        for said in &self.dialogue {
            if let Some(c) = handling.captures(&said.text) {
                classes.extend(labels(&c[1]).into_iter().map(|(class, id)| (id, class)));
            }
        }
        let mut out = BTreeMap::new();
        for id in claims.keys().filter(|id| self.claimed_by_other(claims, **id)) {
            if let Some(class) = classes.get(id) {
                *out.entry(class.clone()).or_insert(0) += 1;
            }
        }
        out
    }

    /// Somebody else holds the claim on `id`: a teammate named it and I
    /// either did not or rank after them.
    fn claimed_by_other(&self, claims: &BTreeMap<u64, Vec<String>>, id: u64) -> bool {
        let Some(names) = claims.get(&id) else { return false };
        let mine = names.contains(&self.me);
        names.iter().filter(|n| **n != self.me).any(|n| !mine || self.rank(n) < self.rank(&self.me))
    }

    /// Rooms each agent is searching. An agent's own latest "I'll search"
    /// is authoritative; assignments made by others only count until the
    /// agent has spoken for itself.
    fn room_claims(&self) -> BTreeMap<String, BTreeSet<u64>> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let split = re(&RE, r"Room split: ([^.]*)\.");
        let mut own: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
        let mut assigned: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
        for said in &self.dialogue {
            let Some(c) = split.captures(&said.text) else { continue };
            for part in c[1].split("; ") {
                if let Some(r) = part.strip_prefix("I'll search ") {
                    own.insert(said.speaker.clone(), labels(r).into_iter().map(|l| l.1).collect());
                } else if let Some((name, r)) = part.split_once(" takes ") {
                    assigned.insert(name.to_string(), labels(r).into_iter().map(|l| l.1).collect());
                }
            }
        }
        for (name, rooms) in assigned {
            own.entry(name).or_insert(rooms);
        }
        own
    }

    /// Goal objects teammates report, latest report per object. Objects in
    /// the reporter's own room are left to the reporter while it still has
    /// a free hand.
    fn reported(&self) -> BTreeMap<u64, Placed> {
        static RE: OnceLock<Regex> = OnceLock::new();
        static STATUS: OnceLock<Regex> = OnceLock::new();
        let saw = re(&RE, r"I saw ([^.]*)\.");
        let status = re(&STATUS, r"I'm in <[^<>]+> \((\d+)\), holding ([^.]*)\.");
        let mut out = BTreeMap::new();
        for said in self.dialogue.iter().filter(|s| s.speaker != self.me) {
            let Some(c) = saw.captures(&said.text) else { continue };
            let busy_room = status
                .captures(&said.text)
                .filter(|st| st[2].contains(NOTHING))
                .and_then(|st| st[1].parse::<u64>().ok());
            for p in placed_list(&c[1]) {
                if busy_room.is_some() && p.room.as_ref().map(|r| r.1) == busy_room {
                    out.remove(&p.id);
                } else {
                    out.insert(p.id, p);
                }
            }
        }
        out
    }

    /// Rooms of goal locations teammates have reported.
    fn reported_targets(&self) -> BTreeMap<u64, u64> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let places = re(&RE, r"Goal locations: ([^.]*)\.");
        let mut out = BTreeMap::new();
        for said in self.dialogue.iter().filter(|s| s.speaker != self.me) {
            if let Some(c) = places.captures(&said.text) {
                for p in placed_list(&c[1]) {
                    if let Some(room) = p.room {
                        out.insert(p.id, room.1);
                    }
                }
            }
        }
        out
    }

    /// Rooms a teammate has already searched: present in the map but left
    /// out of that teammate's latest split.
    fn searched_by_others(&self, all_rooms: &BTreeSet<u64>) -> BTreeSet<u64> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let split = re(&RE, r"Room split: ([^.]*)\.");
        let mut out = BTreeSet::new();
        for name in self.team().into_iter().filter(|n| *n != self.me) {
            let opener = self.dialogue.iter().find(|s| s.speaker == name).map(|s| s.text.as_str());
            let Some(latest) = self.latest_from(&name) else { continue };
            if Some(latest) == opener {
                continue;
            }
            if let Some(c) = split.captures(latest) {
                let listed: BTreeSet<u64> = labels(&c[1]).into_iter().map(|l| l.1).collect();
                out.extend(all_rooms.iter().filter(|r| !listed.contains(r)));
            }
        }
        out
    }

    fn cost(&self, c: &Candidate) -> Option<f64> {
        if c.cost.is_some() {
            return c.cost;
        }
        if !self.guess_costs {
            return None;
        }
        let rooms = self.progress.room_ids();
        Some(match (c.verb(), c.first_id()) {
            ("walk", Some(id)) if rooms.contains(&id) => GUESS_ROOM_WALK,
            ("walk", _) => {
                let here = self.progress.room.as_ref().map(|r| r.1);
                let ids = c.ids();
                if ids.len() > 1 && Some(ids[ids.len() - 1]) == here {
                    GUESS_NEAR_WALK
                } else {
                    GUESS_FAR_WALK
                }
            }
            _ => GUESS_OTHER,
        })
    }

    /// Cheapest of `set`, ties and cost-free lists by text.
    fn best<'a>(&self, set: &[&'a Candidate]) -> Option<&'a Candidate> {
        set.iter().copied().min_by(|a, b| {
            let (ca, cb) = (self.cost(a).unwrap_or(0.0), self.cost(b).unwrap_or(0.0));
            ca.total_cmp(&cb).then_with(|| a.text.cmp(&b.text))
        })
    }
}

fn is_container_class(class: &str) -> bool {
    CONTAINER_CLASSES.contains(&class)
}

fn plan(v: &PromptView) -> String {
    let p = &v.progress;
    let need = p.need();
    let carried = p.carried();
    let needed = |class: &str| need.get(class).copied().unwrap_or(0) > 0;
    let claims = v.object_claims();
    let claimed = v.claimed_counts(&claims);
    let still_wanted = |class: &str| {
        let covered = carried.get(class).copied().unwrap_or(0) + claimed.get(class).copied().unwrap_or(0);
        need.get(class).copied().unwrap_or(0) > covered
    };
    let open_pred = |target: u64, relation: &str, class: &str| {
        p.preds.iter().any(|q| q.target == target && q.relation == relation && q.class == class && q.done < q.count)
    };
    let held: BTreeMap<u64, &Hand> = p.held().map(|h| (h.id, h)).collect();
    let held_container = |id: u64| v.transport && held.get(&id).map(|h| is_container_class(&h.class)).unwrap_or(false);
    let useful = |h: &Hand| needed(&h.class) || (v.transport && is_container_class(&h.class) && h.contents.iter().any(|c| needed(&c.0)))
        || (v.transport && is_container_class(&h.class) && h.contents.is_empty() && need.values().any(|n| *n > 0));
    let cands: Vec<&Candidate> = v.candidates.iter().collect();
    let pick = |set: Vec<&Candidate>| v.best(&set).map(|c| c.text.clone());

    // Tier A: progress available right now.
    let mut tier_a = Vec::new();
    for c in &cands {
        let ids = c.ids();
        match c.verb() {
            "put" if ids.len() == 2 => {
                let (obj, target) = (ids[0], ids[1]);
                let relation = if c.text.contains(") on <") { "ON" } else { "IN" };
                let Some(h) = held.get(&obj) else { continue };
                let classes: Vec<&str> =
                    std::iter::once(h.class.as_str()).chain(h.contents.iter().map(|c| c.0.as_str())).collect();
                if classes.iter().any(|cl| open_pred(target, relation, cl)) {
                    tier_a.push(*c);
                } else if relation == "IN" && held_container(target) && !held_container(obj) && needed(&h.class) {
                    tier_a.push(*c);
                }
            }
            "open" => {
                if let Some(t) = c.first_id() {
                    if p.held().any(|h| open_pred(t, "IN", &h.class)) {
                        tier_a.push(*c);
                    }
                }
            }
            "drop" => {
                if let Some(id) = c.first_id() {
                    if held.get(&id).map(|h| !useful(h)).unwrap_or(false) {
                        tier_a.push(*c);
                    }
                }
            }
            _ => {}
        }
    }
    if let Some(choice) = pick(tier_a) {
        return choice;
    }

    // Tier B: collect or deliver.
    let room_ids = p.room_ids();
    let seen: BTreeMap<u64, &Placed> = p.seen.iter().map(|s| (s.id, s)).collect();
    // Anything in hand, directly or inside a held container, is already collected.
    let in_hand: BTreeSet<u64> = p.held().flat_map(|h| std::iter::once(h.id).chain(h.contents.iter().map(|c| c.1))).collect();
    let collectable = |id: u64| {
        seen.get(&id).map(|s| still_wanted(&s.class)).unwrap_or(false)
            && !v.claimed_by_other(&claims, id)
            && !in_hand.contains(&id)
            && !p.in_place.contains(&id)
    };
    let unexplored: BTreeSet<u64> = p.unexplored.iter().map(|r| r.1).collect();
    let reported_rooms: BTreeSet<u64> = v
        .reported()
        .values()
        .filter(|r| still_wanted(&r.class) && !seen.contains_key(&r.id) && !p.in_place.contains(&r.id))
        .filter(|r| !v.claimed_by_other(&claims, r.id))
        .filter_map(|r| r.room.as_ref().map(|room| room.1))
        .filter(|room| unexplored.contains(room))
        .collect();
    let delivering: BTreeSet<u64> = p
        .preds
        .iter()
        .filter(|q| q.done < q.count)
        .filter(|q| p.held().any(|h| h.class == q.class || h.contents.iter().any(|c| c.0 == q.class)))
        .map(|q| q.target)
        .collect();
    let known_targets: BTreeSet<u64> = p.targets.iter().map(|t| t.id).collect();
    let delivery_rooms: BTreeSet<u64> = v
        .reported_targets()
        .into_iter()
        .filter(|(t, _)| delivering.contains(t) && !known_targets.contains(t))
        .map(|(_, room)| room)
        .collect();
    let holds_container = p.held().any(|h| is_container_class(&h.class));
    let container_ids: BTreeSet<u64> =
        p.containers.iter().map(|c| c.id).filter(|id| !p.in_place.contains(id) && !in_hand.contains(id)).collect();
    let want_container = v.transport && !holds_container && p.free_hand() && need.values().sum::<u32>() > 1;

    let mut tier_b = Vec::new();
    for c in &cands {
        let Some(first) = c.first_id() else { continue };
        match c.verb() {
            "grasp" if p.free_hand() && collectable(first) => tier_b.push(*c),
            "grasp" if want_container && container_ids.contains(&first) && !v.claimed_by_other(&claims, first) => {
                tier_b.push(*c)
            }
            "walk" if room_ids.contains(&first) => {}
            "walk" => {
                if (p.free_hand() && collectable(first))
                    || delivering.contains(&first)
                    || (want_container && container_ids.contains(&first) && !v.claimed_by_other(&claims, first))
                {
                    tier_b.push(*c);
                }
            }
            _ => {}
        }
    }
    if let Some(choice) = pick(tier_b) {
        return choice;
    }

    // Teammates have the rest covered and nothing in hand needs delivering:
    // a long walk now would only stretch everyone's macro-step.
    if !need.keys().any(|class| still_wanted(class)) && delivering.is_empty() {
        return "wait".to_string();
    }

    // Tier C: explore, own rooms first.
    let unopened: BTreeSet<u64> = p.unopened.iter().map(|u| u.id).collect();
    let room_claims = v.room_claims();
    let mine = room_claims.get(&v.me).cloned().unwrap_or_default();
    let others: BTreeSet<u64> =
        room_claims.iter().filter(|(n, _)| **n != v.me).flat_map(|(_, r)| r.iter().copied()).collect();
    let explore_walk = |c: &Candidate, rooms: &dyn Fn(u64) -> bool| {
        c.verb() == "walk" && c.first_id().map(|id| unexplored.contains(&id) && rooms(id)).unwrap_or(false)
    };
    let containers: Vec<&Candidate> = cands
        .iter()
        .copied()
        .filter(|c| matches!(c.verb(), "open" | "walk") && c.first_id().map(|id| unopened.contains(&id)).unwrap_or(false))
        .collect();
    let room_walk = |c: &Candidate, rooms: &BTreeSet<u64>| {
        c.verb() == "walk" && c.first_id().map(|id| rooms.contains(&id)).unwrap_or(false)
    };
    // Full hands and a teammate said where the target is: finish this room's
    // containers, then go there.
    if !p.free_hand() && !delivery_rooms.is_empty() {
        let here = p.room.as_ref().map(|r| r.1);
        let local: Vec<&Candidate> =
            containers.iter().copied().filter(|c| c.verb() == "open" || c.ids().last().copied() == here).collect();
        let go: Vec<&Candidate> = cands.iter().copied().filter(|c| room_walk(c, &delivery_rooms)).collect();
        if let Some(choice) = pick(local).or_else(|| pick(go)) {
            return choice;
        }
    }
    let own: Vec<&Candidate> = cands.iter().copied().filter(|c| explore_walk(c, &|id| mine.contains(&id))).collect();
    let first_choice: Vec<&Candidate> = containers.into_iter().chain(own).collect();
    if let Some(choice) = pick(first_choice) {
        return choice;
    }
    // Own area done: fetch what teammates reported before exploring blind.
    if p.free_hand() {
        let fetch: Vec<&Candidate> = cands.iter().copied().filter(|c| room_walk(c, &reported_rooms)).collect();
        if let Some(choice) = pick(fetch) {
            return choice;
        }
    }
    let free: Vec<&Candidate> =
        cands.iter().copied().filter(|c| explore_walk(c, &|id| !mine.contains(&id) && !others.contains(&id))).collect();
    if let Some(choice) = pick(free) {
        return choice;
    }
    let searched = v.searched_by_others(&room_ids);
    let rest: Vec<&Candidate> =
        cands.iter().copied().filter(|c| explore_walk(c, &|id| !searched.contains(&id))).collect();
    if let Some(choice) = pick(rest) {
        return choice;
    }

    // Everything explored but work remains: patrol to the next room by id
    // so moved objects are found again.
    if need.values().any(|n| *n > 0) {
        if let Some((_, here)) = &p.room {
            let rooms: Vec<u64> = room_ids.iter().copied().collect();
            let next = rooms.iter().copied().find(|r| r > here).or_else(|| rooms.first().copied());
            if let Some(next) = next.filter(|n| n != here) {
                if let Some(c) = cands.iter().find(|c| c.verb() == "walk" && c.first_id() == Some(next)) {
                    return c.text.clone();
                }
            }
        }
    }
    "wait".to_string()
}

/// `<a> (1), <b> (2)`
fn join_labels(items: &[(String, u64)]) -> String {
    items.iter().map(|(n, id)| label(n, *id)).collect::<Vec<_>>().join(", ")
}

/// Assignment of `rooms` (sorted by id) over the team. Rooms someone
/// already holds stay with them; the rest go round-robin.
fn room_split(v: &PromptView, rooms: &[(String, u64)]) -> Option<String> {
    let team = v.team();
    if rooms.is_empty() || team.is_empty() {
        return None;
    }
    let held = v.room_claims();
    let mut shares: Vec<Vec<(String, u64)>> = vec![Vec::new(); team.len()];
    let mut next = 0;
    for room in rooms {
        let owner = team.iter().position(|n| held.get(n).map(|r| r.contains(&room.1)).unwrap_or(false));
        let i = owner.unwrap_or_else(|| {
            next += 1;
            (next - 1) % team.len()
        });
        shares[i].push(room.clone());
    }
    let me = v.rank(&v.me);
    let mut parts = vec![format!("I'll search {}", join_or_none(&shares[me]))];
    for (i, name) in team.iter().enumerate() {
        if *name != v.me {
            parts.push(format!("{name} takes {}", join_or_none(&shares[i])));
        }
    }
    Some(format!("Room split: {}.", parts.join("; ")))
}

fn join_or_none(items: &[(String, u64)]) -> String {
    if items.is_empty() {
        NONE.to_string()
    } else {
        join_labels(items)
    }
}

fn compose_message(v: &PromptView) -> String {
    let p = &v.progress;
    let tips = v.knowledge.to_lowercase();
    let mut parts = Vec::new();
    let spoken = v.dialogue.iter().any(|s| s.speaker == v.me);
    let room = p.room.as_ref().map(|(n, id)| label(n, *id)).unwrap_or_else(|| "an unknown room".into());
    let (done, total) = p.done();
    let status = format!("I'm in {room}, holding {}. Done {done}/{total}.", p.hands_text());
    if !spoken {
        parts.push(format!("Hi {}.", crate::agent::join_names(&v.teammates)));
        parts.push(status);
        if let Some(split) = room_split(v, &p.all_rooms()) {
            parts.push(split);
        }
    } else {
        parts.push(status);
    }
    if tips.contains(KEY_HANDLING) {
        let need = p.need();
        let here = p.room.as_ref().map(|r| r.1);
        let mut mine: Vec<(String, u64)> = Vec::new();
        for h in p.held() {
            for (class, id) in std::iter::once((h.class.clone(), h.id)).chain(h.contents.iter().cloned()) {
                if need.get(class.as_str()).copied().unwrap_or(0) > 0 {
                    mine.push((class, id));
                }
            }
        }
        let free = p.hands.iter().filter(|h| h.is_none()).count();
        let reachable = p
            .seen
            .iter()
            .filter(|s| s.room.as_ref().map(|r| r.1) == here && need.get(s.class.as_str()).copied().unwrap_or(0) > 0)
            .take(free);
        mine.extend(reachable.map(|s| (s.class.clone(), s.id)));
        if !mine.is_empty() {
            parts.push(format!("I'm handling {}.", join_labels(&mine)));
        }
    }
    if tips.contains(KEY_SPLIT) && spoken {
        let searched = v.searched_by_others(&p.room_ids());
        let open: Vec<(String, u64)> = p.unexplored.iter().filter(|r| !searched.contains(&r.1)).cloned().collect();
        if let Some(split) = room_split(v, &open) {
            parts.push(split);
        }
    }
    if tips.contains(KEY_FAILURES) {
        if let Some(last) = v.previous_actions.split("; ").last().and_then(|a| a.strip_suffix(" (failed)")) {
            parts.push(format!("My last action failed: {last}."));
        }
    }
    if tips.contains(KEY_LOCATIONS) && !p.seen.is_empty() {
        let seen: Vec<String> = p.seen.iter().map(Placed::text).collect();
        parts.push(format!("I saw {}.", seen.join("; ")));
    }
    if tips.contains(KEY_LOCATIONS) && !p.targets.is_empty() {
        let targets: Vec<String> = p.targets.iter().map(Placed::text).collect();
        parts.push(format!("{TARGETS_PREFIX}{}.", targets.join("; ")));
    }
    parts.join(" ")
}

fn reflect(v: &PromptView) -> String {
    let mut lines: Vec<String> =
        v.knowledge.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect();
    let have = v.knowledge.to_lowercase();
    let last = v.dialogue.iter().rev().find(|s| s.speaker != v.me).map(|s| s.text.as_str()).unwrap_or("");
    let mut added = Vec::new();
    let mut add = |key: &str, tip: &str, missing: bool| {
        if missing && !have.contains(key) {
            lines.push(format!("- {tip}"));
            added.push(key.to_string());
        }
    };
    add(KEY_LOCATIONS, TIP_LOCATIONS, !last.contains("I saw "));
    add(KEY_HANDLING, TIP_HANDLING, !last.contains("I'm handling"));
    add(KEY_SPLIT, TIP_SPLIT, !last.contains("Room split:"));
    add(KEY_FAILURES, TIP_FAILURES, v.current_plans.contains("failed") && !last.contains("failed"));
    let note = if added.is_empty() {
        "The last message covered what the list asks for; keeping the list.".to_string()
    } else {
        format!("The last message lacked: {}.", added.join(", "))
    };
    format!("{note}\n{KNOWLEDGE_DELIMITER}\n{}\n{KNOWLEDGE_DELIMITER}", lines.join("\n"))
}
