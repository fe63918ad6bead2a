//! Re-execute a recorded episode and compare.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::sha256_hex;
use super::record::{EpisodeRecord, StepEvent};
use super::runner::{run_episode_with, Resources};
use super::HarnessError;
use crate::llm::{BackendError, BackendErrorKind, LoggedBackend};
use crate::utility::UtilityModel;
use crate::world::EnvAction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Diverged { tick: u32, detail: String },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// What the world saw in one macro-step, without prompts or digests.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct WorldView {
    tick: u32,
    tick_after: u32,
    actions: Vec<(usize, EnvAction, String, bool, u32)>,
    messages: Vec<String>,
    goal_progress: f64,
}

fn world_view(e: &StepEvent) -> WorldView {
    WorldView {
        tick: e.tick,
        tick_after: e.tick_after,
        actions: e.agents.iter().map(|a| (a.agent.0, a.action, a.action_text.clone(), a.succeeded, a.cost)).collect(),
        messages: e.messages.iter().map(|m| m.text.clone()).collect(),
        goal_progress: e.goal_progress,
    }
}

/// Resources for replaying `record`: the configured backend for scripted
/// runs, the logged replies otherwise, and the utility model from the
/// config path when the flags need one (checked against the digest).
pub fn replay_resources(record: &EpisodeRecord) -> Result<Resources, HarnessError> {
    let config = &record.header.config;
    let backend: Arc<dyn crate::llm::Backend> = if config.backend.is_scripted() {
        config.backend.build().map_err(|e| HarnessError::Config(e.to_string()))?
    } else {
        Arc::new(LoggedBackend::new(record.logged_exchanges().into_iter().map(|x| {
            let reply = match (x.reply, x.error) {
                (Some(r), _) => Ok(r),
                (None, Some(e)) => Err(e),
                (None, None) => Err(BackendError::new(BackendErrorKind::InvalidRequest, "no logged reply")),
            };
            (x.prompt, reply)
        })))
    };
    let res = Resources::new(backend);
    if !config.flags.use_utility {
        return Ok(res);
    }
    let path = config
        .utility_model
        .as_ref()
        .ok_or_else(|| HarnessError::Config("record used a utility model but its config names no path".into()))?;
    let model = UtilityModel::load(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    let digest = sha256_hex(model.to_json());
    if record.header.model_digest.as_deref() != Some(digest.as_str()) {
        return Err(HarnessError::Config(format!("utility model at {} does not match the record", path.display())));
    }
    Ok(res.with_utility(model))
}

/// Replay with resources loaded from the record itself.
pub fn replay(record: &EpisodeRecord) -> Result<Verdict, HarnessError> {
    let res = replay_resources(record)?;
    replay_with(record, &res)
}

/// Parse a JSONL record (checking its schema version) and replay it.
pub fn replay_jsonl(text: &str) -> Result<Verdict, HarnessError> {
    replay(&EpisodeRecord::from_jsonl(text)?)
}

/// Re-run the episode. Scripted records must regenerate byte for byte;
/// others must reproduce the same world events.
pub fn replay_with(record: &EpisodeRecord, res: &Resources) -> Result<Verdict, HarnessError> {
    let h = &record.header;
    let regenerated = run_episode_with(&h.config, res, &h.task, h.seed, h.initial_knowledge.clone())?;
    let last_tick = record.events.last().map(|e| e.tick).unwrap_or(0);
    if h.config.backend.is_scripted() {
        let (a, b) = (record.to_jsonl(), regenerated.to_jsonl());
        if a == b {
            return Ok(Verdict::Pass);
        }
        let line = a.lines().zip(b.lines()).position(|(x, y)| x != y).unwrap_or(a.lines().count().min(b.lines().count()));
        let (tick, what) = match line {
            0 => (0, "header".to_string()),
            n if n <= record.events.len() => (record.events[n - 1].tick, format!("event {}", n - 1)),
            _ => (last_tick, "footer".to_string()),
        };
        return Ok(Verdict::Diverged { tick, detail: format!("{what} differs from the regenerated record") });
    }
    for (i, (old, new)) in record.events.iter().zip(&regenerated.events).enumerate() {
        if world_view(old) != world_view(new) {
            return Ok(Verdict::Diverged { tick: old.tick, detail: format!("world events differ at event {i}") });
        }
    }
    if record.events.len() != regenerated.events.len() {
        let i = record.events.len().min(regenerated.events.len());
        let tick = record.events.get(i).or(regenerated.events.get(i)).map(|e| e.tick).unwrap_or(last_tick);
        return Ok(Verdict::Diverged {
            tick,
            detail: format!("{} recorded events, {} regenerated", record.events.len(), regenerated.events.len()),
        });
    }
    let (f, g) = (&record.footer, &regenerated.footer);
    if (f.completed, f.steps_used, f.delivered) != (g.completed, g.steps_used, g.delivered) {
        return Ok(Verdict::Diverged { tick: last_tick, detail: "episode outcome differs".into() });
    }
    Ok(Verdict::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AblationFlags;
    use crate::harness::RunConfig;
    use crate::llm::ScriptedBackend;
    use crate::world::builtin_task;

    fn recorded() -> (EpisodeRecord, Resources) {
        let cfg = RunConfig { flags: AblationFlags::without_utility(), ..Default::default() };
        let res = Resources::new(Arc::new(ScriptedBackend::new("default").unwrap()));
        let task = cfg.adapt(builtin_task("afternoon_tea").unwrap());
        (run_episode_with(&cfg, &res, &task, 2, Default::default()).unwrap(), res)
    }

    #[test]
    fn untouched_record_passes() {
        let (r, _) = recorded();
        assert_eq!(replay(&r).unwrap(), Verdict::Pass);
        assert_eq!(replay_jsonl(&r.to_jsonl()).unwrap(), Verdict::Pass);
    }

    #[test]
    fn tampered_action_names_its_tick() {
        let (mut r, res) = recorded();
        let i = r.events.len() / 2;
        r.events[i].agents[0].action = EnvAction::NoOp;
        r.events[i].agents[0].action_text = "tampered".into();
        let tick = r.events[i].tick;
        match replay_with(&r, &res).unwrap() {
            Verdict::Diverged { tick: t, .. } => assert_eq!(t, tick),
            Verdict::Pass => panic!("tampering went unnoticed"),
        }
    }
}
