//! Task definitions and their human-editable TOML form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::layout::{builtin_layout, Cell, Layout, RoomGraph, RoomId};
use super::object::{Location, ObjectId, ObjectInstance, ObjectKind, CONTAINER_CAPACITY};
use super::WorldError;

pub const TASK_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "ON")]
    On,
    #[serde(rename = "IN")]
    In,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::On => "ON",
            Relation::In => "IN",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GoalPredicate {
    pub relation: Relation,
    #[serde(rename = "class")]
    pub object_class: String,
    pub target: ObjectId,
    pub count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Predicate goals scored by completion time.
    #[default]
    Household,
    /// Deliver as many targets as possible; scored by transport rate.
    Transport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayoutSpec {
    Builtin(String),
    Inline(RoomGraph),
}

impl LayoutSpec {
    pub fn resolve(&self) -> Result<Layout, WorldError> {
        let graph = match self {
            LayoutSpec::Builtin(id) => builtin_layout(id)
                .ok_or_else(|| WorldError::InvalidTask(format!("unknown layout {id:?}")))?,
            LayoutSpec::Inline(graph) => graph.clone(),
        };
        Layout::new(graph)
    }
}

/// One object as written in a task file. Exactly one of `room`+`cell`,
/// `on` or `in` gives the initial location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub id: u32,
    pub class: String,
    pub kind: ObjectKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<[u16; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on: Option<u32>,
    #[serde(rename = "in", default, skip_serializing_if = "Option::is_none")]
    pub inside: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open: Option<bool>,
}

impl Placement {
    pub fn to_instance(&self) -> Result<ObjectInstance, WorldError> {
        let bad = |why: &str| WorldError::InvalidTask(format!("object {}: {why}", self.id));
        let location = match (self.room, self.cell, self.on, self.inside) {
            (Some(room), Some([x, y]), None, None) => Location::InRoom { room: RoomId(room), cell: Cell::new(x, y) },
            (None, None, Some(s), None) => Location::OnSurface(ObjectId(s)),
            (None, None, None, Some(c)) => Location::InContainer(ObjectId(c)),
            _ => return Err(bad("needs exactly one of room+cell, on, in")),
        };
        let mut obj = ObjectInstance::new(ObjectId(self.id), self.class.clone(), self.kind, location);
        match self.open {
            Some(open) if obj.is_openable => obj.open = open,
            Some(_) => return Err(bad("only receptacles can be opened")),
            None => {}
        }
        Ok(obj)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub kind: TaskKind,
    pub layout: LayoutSpec,
    pub horizon: u32,
    pub n_agents: usize,
    pub objects: Vec<Placement>,
    pub goal: Vec<GoalPredicate>,
}

fn default_schema() -> u32 {
    TASK_SCHEMA_VERSION
}

impl Task {
    pub fn from_toml_str(text: &str) -> Result<Task, WorldError> {
        let task: Task = toml::from_str(text).map_err(|e| WorldError::Parse(e.to_string()))?;
        if task.schema_version != TASK_SCHEMA_VERSION {
            return Err(WorldError::Parse(format!("unsupported task schema version {}", task.schema_version)));
        }
        Ok(task)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("task serializes")
    }

    pub fn with_agents(mut self, n: usize) -> Self {
        self.n_agents = n;
        self
    }

    pub fn instances(&self) -> Result<BTreeMap<ObjectId, ObjectInstance>, WorldError> {
        let mut out = BTreeMap::new();
        for p in &self.objects {
            let obj = p.to_instance()?;
            if out.insert(obj.id, obj).is_some() {
                return Err(WorldError::InvalidTask(format!("duplicate object id {}", p.id)));
            }
        }
        Ok(out)
    }

    /// Check every task invariant and return the resolved layout with the
    /// initial object set.
    pub fn validate(&self) -> Result<(Layout, BTreeMap<ObjectId, ObjectInstance>), WorldError> {
        let invalid = |msg: String| Err(WorldError::InvalidTask(msg));
        if self.horizon == 0 {
            return invalid("horizon must be positive".into());
        }
        if self.n_agents == 0 {
            return invalid("at least one agent required".into());
        }
        if self.goal.is_empty() {
            return invalid("goal is empty".into());
        }
        let layout = self.layout.resolve()?;
        let objects = self.instances()?;
        let room_ids: BTreeSet<u32> = layout.rooms().iter().map(|r| r.id.0).collect();
        for obj in objects.values() {
            if room_ids.contains(&obj.id.0) {
                return invalid(format!("object id {} collides with a room id", obj.id));
            }
            match obj.location {
                Location::InRoom { room, cell } => {
                    if !layout.room(room).map(|r| r.is_walkable(cell)).unwrap_or(false) {
                        return invalid(format!("object {} placed on invalid cell", obj.id));
                    }
                }
                Location::OnSurface(p) => match objects.get(&p) {
                    Some(s) if s.is_surface => {}
                    _ => return invalid(format!("object {} placed on a non-surface", obj.id)),
                },
                Location::InContainer(p) => match objects.get(&p) {
                    Some(c) if c.is_container && !obj.is_container => {}
                    _ => return invalid(format!("object {} placed in a non-container", obj.id)),
                },
                Location::Held { .. } => return invalid(format!("object {} cannot start held", obj.id)),
            }
            // Acyclic location chains.
            let mut cur = obj.location;
            let mut steps = 0;
            while let Some(p) = cur.parent() {
                steps += 1;
                if p == obj.id || steps > objects.len() {
                    return invalid(format!("object {} is inside itself", obj.id));
                }
                cur = match objects.get(&p) {
                    Some(parent) => parent.location,
                    None => return invalid(format!("object {} references missing object {p}", obj.id)),
                };
            }
        }
        for c in objects.values().filter(|o| o.is_container && o.portable) {
            let held = objects.values().filter(|o| o.location == Location::InContainer(c.id)).count();
            if held > CONTAINER_CAPACITY {
                return invalid(format!("container {} over capacity", c.id));
            }
        }
        for pred in &self.goal {
            if pred.count == 0 {
                return invalid("goal counts must be positive".into());
            }
            let target_ok = match (pred.relation, objects.get(&pred.target)) {
                (Relation::On, Some(t)) => t.is_surface,
                (Relation::In, Some(t)) => t.is_container,
                _ => false,
            };
            if !target_ok {
                return invalid(format!("goal target {} unsuitable for {}", pred.target, pred.relation));
            }
        }
        // Predicates sharing a class compete for the same instances.
        let mut needed: BTreeMap<&str, u32> = BTreeMap::new();
        for pred in &self.goal {
            *needed.entry(pred.object_class.as_str()).or_default() += pred.count;
        }
        for (class, need) in needed {
            let have = objects.values().filter(|o| o.portable && o.class == class).count() as u32;
            if have < need {
                return invalid(format!("goal needs {need} {class} but only {have} exist"));
            }
        }
        Ok((layout, objects))
    }

    /// Total number of goal instances (the transport denominator).
    pub fn goal_total(&self) -> u32 {
        self.goal.iter().map(|p| p.count).sum()
    }
}

macro_rules! builtin {
    ($($id:literal),* $(,)?) => {
        /// Built-in task files, keyed by id.
        pub const BUILTIN_TASKS: &[(&str, &str)] = &[
            $(($id, include_str!(concat!("../../tasks/", $id, ".toml")))),*
        ];
    };
}

builtin!(
    "afternoon_tea",
    "wash_dishes",
    "prepare_meal",
    "put_groceries",
    "dinner_table",
    "food_transport",
    "stuff_transport",
);

pub fn builtin_task(id: &str) -> Option<Task> {
    BUILTIN_TASKS
        .iter()
        .find(|(k, _)| *k == id)
        .map(|(_, text)| Task::from_toml_str(text).expect("built-in task parses"))
}

/// The five household tasks with predicate goals.
pub fn household_suite() -> Vec<Task> {
    ["afternoon_tea", "wash_dishes", "prepare_meal", "put_groceries", "dinner_table"]
        .iter()
        .map(|id| builtin_task(id).expect("built-in"))
        .collect()
}

/// The two container-transport tasks.
pub fn transport_suite() -> Vec<Task> {
    ["food_transport", "stuff_transport"].iter().map(|id| builtin_task(id).expect("built-in")).collect()
}

pub fn suite(id: &str) -> Option<Vec<Task>> {
    match id {
        "household" => Some(household_suite()),
        "transport" => Some(transport_suite()),
        other => builtin_task(other).map(|t| vec![t]),
    }
}
