//! Episodes, benchmarks, ablations and replay.

mod ablation;
mod benchmark;
mod config;
mod metrics;
mod record;
mod replay;
mod runner;

pub use ablation::{ablation_rows, run_ablation, run_ablation_with, AblationReport, AblationRow};
pub use benchmark::{read_records, record_file_name, run_benchmark, run_suite, write_outputs, BenchmarkOutput};
pub use metrics::{EpisodeRow, GroupMetrics, MetricsReport, METRICS_SCHEMA_VERSION};
pub use replay::{replay, replay_jsonl, replay_resources, replay_with, Verdict};

pub use config::{sha256_hex, RunConfig, DEFAULT_SEEDS, RUN_SCHEMA_VERSION};
pub use record::{
    AgentStep, Delivery, EpisodeRecord, Exchange, RecordFooter, RecordHeader, ReflectionEvent, StepEvent, StepKind,
    RECORD_SCHEMA_VERSION,
};
pub use runner::{run_episode, run_episode_with, Resources};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("schema version mismatch: found {found}, expected {expected}")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("io error: {0}")]
    Io(String),
    #[error("record error: {0}")]
    Record(String),
    #[error("world error: {0}")]
    World(String),
    #[error("utility error: {0}")]
    Utility(String),
}
