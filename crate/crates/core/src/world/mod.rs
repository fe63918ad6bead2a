//! Deterministic symbolic household simulator.
//!
//! Rooms are small grids joined by doors. Agents act through high-level
//! actions whose durations differ: walking costs its shortest-path length,
//! every manipulation costs one tick. All agents commit one action per
//! macro-step and the clock advances by the slowest of them.

mod action;
mod layout;
mod object;
mod observe;
mod state;
mod task;

use thiserror::Error;

pub use action::{ActionOutcome, EnvAction, FailReason, WalkTarget};
pub use layout::{builtin_layout, Cell, Door, Layout, Position, Room, RoomGraph, RoomId, RoomKind};
pub use object::{AgentId, Location, ObjectId, ObjectInstance, ObjectKind, CONTAINER_CAPACITY};
pub use observe::{render_observation_text, Observation, PredicateProgress, VisibleObject};
pub use state::{agent_name, goal_progress, AgentBody, StepOutcome, WorldState, MANIPULATION_COST};
pub(crate) use state::satisfies;
pub use task::{
    builtin_task, household_suite, suite, transport_suite, GoalPredicate, LayoutSpec, Placement, Relation, Task,
    TaskKind, BUILTIN_TASKS, TASK_SCHEMA_VERSION,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("task file: {0}")]
    Parse(String),
    #[error("malformed joint action: {0}")]
    MalformedJointAction(String),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("target unreachable")]
    UnreachableTarget,
    #[error("invalid action: {0}")]
    InvalidAction(String),
}
