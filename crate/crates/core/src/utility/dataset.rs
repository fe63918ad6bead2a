//! Exploratory description/cost datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::UtilityError;
use crate::world::{render_observation_text, AgentId, Task, WorldState};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
/// Random exploration gets far less done per tick than a task policy, so
/// exploration episodes run longer than evaluation episodes.
pub const DEFAULT_EXPLORATION_HORIZON: u32 = 1000;

/// One executed (or probed) action with its true tick cost.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationSample {
    pub obs_text: String,
    pub action_text: String,
    pub cost: u32,
    pub episode_id: u64,
    /// Set on probe rows: every available action of one decision state,
    /// recorded for ranking evaluation. Executed actions carry `None`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_state: Option<u64>,
}

impl ExplorationSample {
    pub(crate) fn sort_key(&self) -> (&str, &str, u32, u64, Option<u64>) {
        (&self.obs_text, &self.action_text, self.cost, self.episode_id, self.probe_state)
    }

    fn validate(&self) -> Result<(), UtilityError> {
        if self.cost == 0 {
            return Err(UtilityError::Format("cost must be at least 1".into()));
        }
        if self.obs_text.trim().is_empty() || self.action_text.trim().is_empty() {
            return Err(UtilityError::Format("sample texts must be nonempty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Holdout,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExploratoryDataset {
    pub samples: Vec<ExplorationSample>,
    pub split: BTreeMap<u64, Split>,
}

/// Assign whole episodes to train or holdout. The train share rounds up, so a
/// single episode always trains.
pub fn split_episodes(episodes: &BTreeSet<u64>, train_fraction: f64, seed: u64) -> BTreeMap<u64, Split> {
    let mut ids: Vec<u64> = episodes.iter().copied().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5711_7000));
    let n_train = ((ids.len() as f64) * train_fraction.clamp(0.0, 1.0)).ceil() as usize;
    ids.iter().enumerate().map(|(i, &id)| (id, if i < n_train { Split::Train } else { Split::Holdout })).collect()
}

impl ExploratoryDataset {
    pub fn episode_ids(&self) -> BTreeSet<u64> {
        self.samples.iter().map(|s| s.episode_id).collect()
    }

    fn in_split(&self, which: Split) -> impl Iterator<Item = &ExplorationSample> {
        self.samples.iter().filter(move |s| self.split.get(&s.episode_id) == Some(&which))
    }

    /// Executed training samples.
    pub fn train(&self) -> Vec<ExplorationSample> {
        self.in_split(Split::Train).filter(|s| s.probe_state.is_none()).cloned().collect()
    }

    /// Executed holdout samples.
    pub fn holdout(&self) -> Vec<ExplorationSample> {
        self.in_split(Split::Holdout).filter(|s| s.probe_state.is_none()).cloned().collect()
    }

    /// Holdout probe rows (whole candidate sets per state).
    pub fn holdout_probes(&self) -> Vec<ExplorationSample> {
        self.in_split(Split::Holdout).filter(|s| s.probe_state.is_some()).cloned().collect()
    }

    /// Re-split with a different fraction or seed.
    pub fn resplit(&mut self, train_fraction: f64, seed: u64) {
        self.split = split_episodes(&self.episode_ids(), train_fraction, seed);
    }

    /// JSONL: one `{"split": ...}` header line, then one sample per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), UtilityError> {
        let io = |e: std::io::Error| UtilityError::Io(e.to_string());
        #[derive(Serialize)]
        struct Header<'a> {
            split: &'a BTreeMap<u64, Split>,
        }
        writeln!(w, "{}", serde_json::to_string(&Header { split: &self.split }).expect("header")).map_err(io)?;
        for s in &self.samples {
            writeln!(w, "{}", serde_json::to_string(s).expect("sample")).map_err(io)?;
        }
        Ok(())
    }

    /// Reads the format written by [`write_jsonl`](Self::write_jsonl). A file
    /// of bare samples without a header is accepted and split 80/20 with seed 0.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, UtilityError> {
        #[derive(Deserialize)]
        struct Header {
            split: BTreeMap<u64, Split>,
        }
        let mut ds = ExploratoryDataset::default();
        let mut header = None;
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| UtilityError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            if n == 0 {
                if let Ok(h) = serde_json::from_str::<Header>(&line) {
                    header = Some(h.split);
                    continue;
                }
            }
            let s: ExplorationSample =
                serde_json::from_str(&line).map_err(|e| UtilityError::Format(format!("line {}: {e}", n + 1)))?;
            s.validate()?;
            ds.samples.push(s);
        }
        if ds.samples.is_empty() {
            return Err(UtilityError::EmptyDataset);
        }
        match header {
            Some(split) => {
                if let Some(id) = ds.episode_ids().into_iter().find(|id| !split.contains_key(id)) {
                    return Err(UtilityError::Format(format!("episode {id} missing from split")));
                }
                ds.split = split;
            }
            None => ds.resplit(DEFAULT_TRAIN_FRACTION, 0),
        }
        Ok(ds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    pub episodes_per_task: usize,
    pub seed: u64,
    pub train_fraction: f64,
    /// Record full candidate tables for holdout states.
    pub probes: bool,
    /// Tick budget of one exploration episode; `None` keeps the task horizon.
    pub exploration_horizon: Option<u32>,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            episodes_per_task: 2,
            seed: 0,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            probes: true,
            exploration_horizon: Some(DEFAULT_EXPLORATION_HORIZON),
        }
    }
}

/// Uniform-random exploration. Every agent picks uniformly among its
/// available actions each macro-step; each executed action is labelled with
/// its true cost in the state it was chosen from.
pub fn collect_exploratory_dataset(tasks: &[Task], cfg: &CollectConfig) -> Result<ExploratoryDataset, UtilityError> {
    if tasks.is_empty() || cfg.episodes_per_task == 0 {
        return Err(UtilityError::EmptyDataset);
    }
    let n_episodes = tasks.len() * cfg.episodes_per_task;
    let ids: BTreeSet<u64> = (0..n_episodes as u64).collect();
    let split = split_episodes(&ids, cfg.train_fraction, cfg.seed);
    let mut samples = Vec::new();
    let mut probe_counter = 0u64;
    for episode in 0..n_episodes as u64 {
        let mut task = tasks[episode as usize % tasks.len()].clone();
        if let Some(h) = cfg.exploration_horizon {
            task.horizon = h;
        }
        let ep_seed = cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(episode);
        let probe = cfg.probes && split[&episode] == Split::Holdout;
        explore_episode(&task, ep_seed, episode, probe, &mut probe_counter, &mut samples)?;
    }
    if samples.iter().all(|s| s.probe_state.is_some()) {
        return Err(UtilityError::EmptyDataset);
    }
    Ok(ExploratoryDataset { samples, split })
}

fn explore_episode(
    task: &Task,
    seed: u64,
    episode: u64,
    probe: bool,
    probe_counter: &mut u64,
    out: &mut Vec<ExplorationSample>,
) -> Result<(), UtilityError> {
    let world = |e: crate::world::WorldError| UtilityError::World(e.to_string());
    let (mut state, mut obs) = WorldState::reset(task, seed).map_err(world)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe4b1_07e5);
    while !state.is_done() {
        let mut joint = Vec::with_capacity(state.n_agents());
        for agent in (0..state.n_agents()).map(AgentId) {
            let obs_text = render_observation_text(&obs[agent.0]);
            let candidates = state.available_actions(agent);
            let choice = candidates[rng.gen_range(0..candidates.len())].clone();
            if probe {
                for c in &candidates {
                    out.push(ExplorationSample {
                        obs_text: obs_text.clone(),
                        action_text: state.render_action_for(agent, c),
                        cost: state.true_cost(agent, c).map_err(world)?,
                        episode_id: episode,
                        probe_state: Some(*probe_counter),
                    });
                }
                *probe_counter += 1;
            }
            out.push(ExplorationSample {
                obs_text,
                action_text: state.render_action_for(agent, &choice),
                cost: state.true_cost(agent, &choice).map_err(world)?,
                episode_id: episode,
                probe_state: None,
            });
            joint.push(choice);
        }
        let step = state.step(&joint).map_err(world)?;
        state = step.state;
        obs = step.observations;
    }
    Ok(())
}
