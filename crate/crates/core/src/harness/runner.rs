//! The episode loop.

use std::sync::Arc;

use super::config::{sha256_hex, RunConfig};
use super::record::{
    AgentStep, Delivery, EpisodeRecord, Exchange, RecordFooter, RecordHeader, ReflectionEvent, StepEvent, StepKind,
    RECORD_SCHEMA_VERSION,
};
use super::HarnessError;
use crate::agent::{plan_next_action, update_memory, AgentMemory, CountingCostModel, LocalInfo, PlanError};
use crate::comm::{
    generate_message, reflect_and_update, should_communicate, CommError, KnowledgeList, Message, MessageBus,
    PrivilegedInfo,
};
use crate::llm::{prompt_digest, Backend, TranscriptEntry, TranscriptTap};
use crate::utility::{CostModel, UtilityModel};
use crate::world::{render_observation_text, AgentId, EnvAction, Task, WorldState};

/// Backend and cost model shared by the episodes of a run.
#[derive(Clone)]
pub struct Resources {
    pub backend: Arc<dyn Backend>,
    pub model: Option<Arc<dyn CostModel + Send + Sync>>,
    pub model_digest: Option<String>,
}

impl Resources {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Resources { backend, model: None, model_digest: None }
    }

    pub fn with_utility(mut self, model: UtilityModel) -> Self {
        self.model_digest = Some(sha256_hex(model.to_json()));
        self.model = Some(Arc::new(model));
        self
    }

    /// Any cost model; `digest` identifies it in records.
    pub fn with_cost_model(mut self, model: Arc<dyn CostModel + Send + Sync>, digest: impl Into<String>) -> Self {
        self.model = Some(model);
        self.model_digest = Some(digest.into());
        self
    }

    /// Build the configured backend and load the utility model if the flags
    /// need one.
    pub fn load(config: &RunConfig) -> Result<Self, HarnessError> {
        let backend = config.backend.build().map_err(|e| HarnessError::Config(e.to_string()))?;
        let res = Resources::new(backend);
        if !config.flags.use_utility {
            return Ok(res);
        }
        let path = config
            .utility_model
            .as_ref()
            .ok_or_else(|| HarnessError::Config("use_utility is on but no utility_model path is set".into()))?;
        let model = UtilityModel::load(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Ok(res.with_utility(model))
    }
}

fn hint(seed: u64, tick: u32, slot: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((tick as u64) << 16) ^ slot
}

fn exchanges(entries: Vec<TranscriptEntry>, hash_only: bool) -> Vec<Exchange> {
    entries
        .into_iter()
        .map(|e| Exchange {
            prompt: if hash_only { prompt_digest(&e.prompt) } else { e.prompt },
            reply: e.reply,
            error: e.error,
            retries: e.retries,
        })
        .collect()
}

/// Load resources from the config and run one episode.
pub fn run_episode(config: &RunConfig, task: &Task, seed: u64) -> Result<EpisodeRecord, HarnessError> {
    config.validate()?;
    let res = Resources::load(config)?;
    run_episode_with(config, &res, task, seed, KnowledgeList::default())
}

/// Run one episode of `task` (already adapted to the config) from `seed`.
pub fn run_episode_with(
    config: &RunConfig,
    res: &Resources,
    task: &Task,
    seed: u64,
    initial_knowledge: KnowledgeList,
) -> Result<EpisodeRecord, HarnessError> {
    config.flags.validate().map_err(HarnessError::Config)?;
    if config.flags.use_utility && res.model.is_none() {
        return Err(HarnessError::Config("use_utility is on but no cost model was supplied".into()));
    }
    let world = |e: crate::world::WorldError| HarnessError::World(e.to_string());
    let (mut state, mut obs) = WorldState::reset(task, seed).map_err(world)?;
    let n = state.n_agents();
    let team: Vec<String> = state.agents.iter().map(|a| a.name.clone()).collect();
    let rooms: std::collections::BTreeMap<_, _> =
        state.layout().rooms().iter().map(|r| (r.id, r.name().to_string())).collect();
    let mut memories: Vec<AgentMemory> =
        (0..n).map(|i| AgentMemory::new(AgentId(i), team.clone(), rooms.clone())).collect();
    let tap = TranscriptTap::new(res.backend.clone());
    let counting = res.model.as_deref().map(|m| CountingCostModel::new(m as &dyn CostModel));
    let model: Option<&dyn CostModel> = counting.as_ref().map(|c| c as &dyn CostModel);
    let mut bus = MessageBus::new(n);
    let mut knowledge = initial_knowledge.clone();
    let mut receptions = vec![0u32; n];
    let mut events = Vec::new();
    let mut footer = RecordFooter {
        completed: false,
        steps_used: 0,
        horizon: task.horizon,
        goal_progress: 0.0,
        delivered: 0,
        total_targets: task.goal.iter().map(|g| g.count).sum(),
        macro_steps: 0,
        messages_sent: 0,
        reflections: 0,
        backend_failures: 0,
        parse_failures: 0,
        fallbacks: 0,
        undelivered_messages: 0,
        utility_queries: 0,
        knowledge: KnowledgeList::default(),
    };
    let kind = task.kind;
    let hash_only = config.hash_only;

    while !state.is_done() {
        let tick = state.tick;
        let mut deliveries = Vec::new();
        for i in 0..n {
            obs[i].inbox = bus.deliver(AgentId(i));
            deliveries.extend(obs[i].inbox.iter().map(|m| Delivery { recipient: AgentId(i), sender: m.sender, tick: m.tick }));
            update_memory(&mut memories[i], &obs[i]);
        }
        let dialogue_digests =
            memories.iter().map(|m| sha256_hex(serde_json::to_vec(m.dialogue.messages()).expect("json"))).collect();

        // Reflection: receivers in id order, at most one each, each seeing
        // the list its predecessor produced.
        let mut reflections = Vec::new();
        let mut knowledge_updates = Vec::new();
        for i in 0..n {
            let mut chosen: Option<Message> = None;
            for m in &obs[i].inbox {
                if config.comm.should_reflect(receptions[i], m.trigger) {
                    chosen = Some(m.clone());
                }
                receptions[i] += 1;
            }
            let Some(msg) = chosen.filter(|_| config.flags.use_reflection) else { continue };
            let info = LocalInfo::from_memory(&memories[i], kind);
            let privileged = PrivilegedInfo::from_memory(&memories[msg.sender.0]);
            let sender_name = memories[i].name_of(msg.sender);
            let result = reflect_and_update(
                &tap,
                &info,
                &privileged,
                &msg,
                &sender_name,
                &knowledge,
                AgentId(i),
                Some(hint(seed, tick, 1000 + i as u64)),
            );
            let exchange = exchanges(tap.drain(), hash_only).into_iter().next().unwrap_or_else(|| Exchange {
                prompt: String::new(),
                reply: None,
                error: None,
                retries: 0,
            });
            let (accepted, backend_failure) = match result {
                Ok(out) => {
                    if out.accepted {
                        knowledge = out.knowledge;
                        knowledge_updates.push(knowledge.record(tick));
                    }
                    (out.accepted, false)
                }
                Err(CommError::Backend(e)) => {
                    log::warn!("reflection by agent {i} failed: {e}");
                    footer.backend_failures += 1;
                    (false, true)
                }
                Err(CommError::Template(e)) => return Err(HarnessError::Config(e.to_string())),
            };
            footer.reflections += 1;
            reflections.push(ReflectionEvent {
                receiver: AgentId(i),
                sender: msg.sender,
                message_tick: msg.tick,
                accepted,
                exchange,
                backend_failure,
            });
        }

        // Each agent either speaks or acts.
        let mut joint = Vec::with_capacity(n);
        let mut steps = Vec::with_capacity(n);
        let mut outgoing = Vec::new();
        for i in 0..n {
            let agent = AgentId(i);
            let obs_text = render_observation_text(&obs[i]);
            let observation = if hash_only { sha256_hex(&obs_text) } else { obs_text.clone() };
            let info = LocalInfo::from_memory(&memories[i], kind);
            let mut step = AgentStep {
                agent,
                kind: StepKind::Plan,
                observation,
                action: EnvAction::NoOp,
                action_text: "wait".into(),
                succeeded: true,
                failure: None,
                cost: 0,
                exchanges: Vec::new(),
                parse_failures: 0,
                fallback: false,
                backend_failure: false,
            };
            if let Some(trigger) = should_communicate(&memories[i], &obs[i], &config.comm) {
                step.kind = StepKind::Communicate;
                let result = generate_message(&tap, &info, &knowledge, agent, tick, Some(trigger), Some(hint(seed, tick, i as u64)));
                step.exchanges = exchanges(tap.drain(), hash_only);
                match result {
                    Ok(generated) => {
                        memories[i].note_sent(generated.message.clone());
                        outgoing.push(generated.message);
                        footer.messages_sent += 1;
                    }
                    Err(CommError::Backend(e)) => {
                        log::warn!("message generation by agent {i} failed: {e}");
                        step.backend_failure = true;
                        footer.backend_failures += 1;
                    }
                    Err(CommError::Template(e)) => return Err(HarnessError::Config(e.to_string())),
                }
                joint.push(EnvAction::NoOp);
                steps.push(step);
                continue;
            }
            let candidates: Vec<(EnvAction, String)> =
                state.available_actions(agent).into_iter().map(|a| (a, state.render_action_for(agent, &a))).collect();
            let result = plan_next_action(
                &tap,
                &info,
                &obs_text,
                &candidates,
                &config.flags,
                model,
                Some(hint(seed, tick, i as u64)),
            );
            step.exchanges = exchanges(tap.drain(), hash_only);
            let (action, text) = match result {
                Ok(out) => {
                    step.parse_failures = out.parse_failures;
                    step.fallback = out.fallback;
                    footer.parse_failures += out.parse_failures;
                    footer.fallbacks += out.fallback as u32;
                    (out.action, out.text)
                }
                Err(PlanError::Backend(e)) => {
                    log::warn!("planning by agent {i} failed: {e}; waiting");
                    step.backend_failure = true;
                    footer.backend_failures += 1;
                    (EnvAction::NoOp, state.render_action_for(agent, &EnvAction::NoOp))
                }
                Err(e) => return Err(HarnessError::Config(e.to_string())),
            };
            memories[i].note_action(tick, action, text.clone());
            step.action = action;
            step.action_text = text;
            joint.push(action);
            steps.push(step);
        }

        let out = state.step(&joint).map_err(world)?;
        for (i, step) in steps.iter_mut().enumerate() {
            step.cost = out.costs[i];
            if let Some(outcome) = &out.observations[i].last_action {
                step.succeeded = outcome.succeeded;
                step.failure = outcome.failure;
            }
        }
        for m in &outgoing {
            bus.broadcast(m);
        }
        events.push(StepEvent {
            tick,
            tick_after: out.state.tick,
            deliveries,
            dialogue_digests,
            reflections,
            knowledge_updates,
            knowledge_version: knowledge.version,
            agents: steps,
            messages: outgoing,
            goal_progress: out.state.goal_progress(),
        });
        footer.macro_steps += 1;
        state = out.state;
        obs = out.observations;
    }

    let progress = state.goal_progress();
    footer.completed = progress >= 1.0;
    footer.steps_used = state.tick;
    footer.goal_progress = progress;
    footer.delivered = (progress * footer.total_targets as f64).round() as u32;
    footer.undelivered_messages = (0..n).map(|i| bus.deliver(AgentId(i)).len() as u32).sum();
    footer.utility_queries = counting.as_ref().map(|c| c.calls() as u64).unwrap_or(0);
    footer.knowledge = knowledge;

    Ok(EpisodeRecord {
        header: RecordHeader {
            schema_version: RECORD_SCHEMA_VERSION,
            config_hash: config.config_hash(),
            config: config.clone(),
            task: task.clone(),
            seed,
            backend: res.backend.describe(),
            model_digest: if config.flags.use_utility { res.model_digest.clone() } else { None },
            initial_knowledge,
        },
        events,
        footer,
    })
}
