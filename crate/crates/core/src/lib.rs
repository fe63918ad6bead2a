//! Multi-agent embodied planning: learned action-cost utilities for each
//! agent and a shared, reflection-evolved cooperation knowledge list that
//! shapes their messages.
//!
//! * [`world`]: symbolic household simulator and ground-truth cost oracle.
//! * [`utility`]: exploratory data collection and the cost regressor.
//! * [`comm`]: broadcast messaging, triggers and the knowledge list.
//! * [`agent`]: the per-agent decision loop.
//! * [`llm`]: prompt templates and completion backends.
//! * [`harness`]: episodes, benchmarks, ablations and replay.

pub mod agent;
pub mod comm;
pub mod harness;
pub mod llm;
pub mod utility;
pub mod world;

pub use agent::{AblationFlags, AgentMemory, LocalInfo};
pub use comm::{CommConfig, CommTrigger, KnowledgeList, Message};
pub use harness::{EpisodeRecord, HarnessError, MetricsReport, RunConfig, Verdict};
pub use llm::{Backend, BackendError, BackendSpec, ScriptedBackend};
pub use utility::{CostModel, ExploratoryDataset, UtilityModel};
pub use world::{AgentId, EnvAction, ObjectId, Observation, Task, WorldState};
