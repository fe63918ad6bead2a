use serde::{Deserialize, Serialize};

use crate::agent::AgentMemory;
use crate::world::Observation;

/// Why an agent spends a macro-step talking instead of acting. Variants are
/// listed in priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommTrigger {
    EpisodeStart,
    SubgoalCompleted,
    GoalObjectDiscovered,
    ActionFailed,
    Heartbeat(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommConfig {
    pub enabled: bool,
    pub on_episode_start: bool,
    pub on_subgoal_completed: bool,
    pub on_goal_object_discovered: bool,
    pub on_action_failed: bool,
    /// Speak when this many ticks passed since the agent last spoke.
    pub heartbeat: Option<u32>,
    /// Receptions per agent that are always reflected on.
    pub reflect_first_n: u32,
    /// After that, reflect only on messages sent because an action failed.
    pub reflect_on_failure: bool,
    /// Carry the final knowledge list into the next episode of a run.
    pub persist_knowledge: bool,
}

impl Default for CommConfig {
    fn default() -> Self {
        CommConfig {
            enabled: true,
            on_episode_start: true,
            on_subgoal_completed: true,
            on_goal_object_discovered: true,
            on_action_failed: true,
            heartbeat: None,
            reflect_first_n: 5,
            reflect_on_failure: true,
            persist_knowledge: false,
        }
    }
}

impl CommConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.heartbeat == Some(0) {
            return Err("heartbeat period must be at least 1".into());
        }
        Ok(())
    }

    /// Whether a receiver that has seen `receptions` earlier messages should
    /// reflect on one sent for `trigger`.
    pub fn should_reflect(&self, receptions: u32, trigger: Option<CommTrigger>) -> bool {
        receptions < self.reflect_first_n || (self.reflect_on_failure && trigger == Some(CommTrigger::ActionFailed))
    }
}

/// Highest-priority trigger that applies, if any. Pure: depends only on the
/// memory (already updated with `obs`) and the observation.
pub fn should_communicate(memory: &AgentMemory, obs: &Observation, cfg: &CommConfig) -> Option<CommTrigger> {
    if !cfg.enabled {
        return None;
    }
    if cfg.on_episode_start && memory.messages_sent == 0 && obs.tick == 0 {
        return Some(CommTrigger::EpisodeStart);
    }
    if cfg.on_subgoal_completed && memory.progress_increased {
        return Some(CommTrigger::SubgoalCompleted);
    }
    if cfg.on_goal_object_discovered && !memory.newly_discovered.is_empty() {
        return Some(CommTrigger::GoalObjectDiscovered);
    }
    if cfg.on_action_failed && memory.last_failed {
        return Some(CommTrigger::ActionFailed);
    }
    if let Some(k) = cfg.heartbeat {
        let since = obs.tick.saturating_sub(memory.last_message_tick.unwrap_or(0));
        if since >= k {
            return Some(CommTrigger::Heartbeat(k));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::update_memory;
    use crate::world::{builtin_task, AgentId, WorldState};

    fn setup() -> (AgentMemory, Observation) {
        let (state, obs) = WorldState::reset(&builtin_task("wash_dishes").unwrap(), 2).unwrap();
        let team = state.agents.iter().map(|a| a.name.clone()).collect();
        let rooms = state.layout().rooms().iter().map(|r| (r.id, r.name().to_string())).collect();
        let mut m = AgentMemory::new(AgentId(0), team, rooms);
        update_memory(&mut m, &obs[0]);
        (m, obs[0].clone())
    }

    #[test]
    fn fresh_episode_starts_with_a_message() {
        let (m, obs) = setup();
        assert_eq!(should_communicate(&m, &obs, &CommConfig::default()), Some(CommTrigger::EpisodeStart));
    }

    #[test]
    fn quiescent_state_is_silent() {
        let (mut m, mut obs) = setup();
        obs.tick = 17;
        m.messages_sent = 1;
        m.newly_discovered.clear();
        assert_eq!(should_communicate(&m, &obs, &CommConfig::default()), None);
    }

    #[test]
    fn discovery_outranks_failure() {
        let (mut m, mut obs) = setup();
        obs.tick = 5;
        m.messages_sent = 1;
        m.newly_discovered = vec![crate::world::ObjectId(101)];
        m.last_failed = true;
        assert_eq!(should_communicate(&m, &obs, &CommConfig::default()), Some(CommTrigger::GoalObjectDiscovered));
    }

    #[test]
    fn heartbeat_fires_after_period() {
        let (mut m, mut obs) = setup();
        m.messages_sent = 1;
        m.last_message_tick = Some(10);
        m.newly_discovered.clear();
        obs.tick = 30;
        let cfg = CommConfig { heartbeat: Some(20), ..Default::default() };
        assert_eq!(should_communicate(&m, &obs, &cfg), Some(CommTrigger::Heartbeat(20)));
        obs.tick = 29;
        assert_eq!(should_communicate(&m, &obs, &cfg), None);
    }

    #[test]
    fn reflection_schedule() {
        let cfg = CommConfig::default();
        assert!(cfg.should_reflect(4, None));
        assert!(!cfg.should_reflect(5, Some(CommTrigger::GoalObjectDiscovered)));
        assert!(cfg.should_reflect(9, Some(CommTrigger::ActionFailed)));
    }
}
