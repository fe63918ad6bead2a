//! The per-agent decision loop: memory, cost annotation, prompting and
//! reply parsing.

mod context;
mod memory;
mod parse;
mod planner;

pub use context::{
    action_history_text, goal_text, in_place, join_names, progress_text, split_names, LocalInfo, ACTION_HISTORY_LEN,
    CONTAINERS_PREFIX, CONTAINER_CLASSES, EXPLORED_PREFIX, HOLDING_PREFIX, IN_PLACE_PREFIX, NONE, NOTHING, ROOM_PREFIX,
    SEEN_PREFIX, TARGETS_PREFIX, UNEXPLORED_PREFIX, UNOPENED_PREFIX,
};
pub use memory::{update_memory, ActionRecord, AgentMemory, KnownObject};
pub use parse::{parse_action, ParseFailure};
pub use planner::{
    annotate_costs, fallback_choice, plan_next_action, planner_bindings, planner_template, render_available_actions,
    AblationFlags, CostAnnotatedAction, CountingCostModel, PlanError, PlanOutcome, PARSE_RETRIES,
};
