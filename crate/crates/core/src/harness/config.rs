//! Run configuration: one TOML file with an explicit schema version.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::agent::AblationFlags;
use crate::comm::CommConfig;
use crate::llm::BackendSpec;
use crate::world::{suite, Task};

pub const RUN_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// `household`, `transport`, or a single built-in task id.
    pub suite: String,
    pub n_agents: usize,
    pub seeds: Vec<u64>,
    pub backend: BackendSpec,
    pub flags: AblationFlags,
    /// Trained utility model; required when `flags.use_utility`.
    pub utility_model: Option<PathBuf>,
    pub comm: CommConfig,
    /// Replaces every task's tick budget when set.
    pub horizon: Option<u32>,
    /// Store sha256 digests instead of full observation and prompt text.
    pub hash_only: bool,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: RUN_SCHEMA_VERSION,
            suite: "household".into(),
            n_agents: 2,
            seeds: DEFAULT_SEEDS.to_vec(),
            backend: BackendSpec::default(),
            flags: AblationFlags::default(),
            utility_model: None,
            comm: CommConfig::default(),
            horizon: None,
            hash_only: false,
            out_dir: None,
        }
    }
}

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.schema_version != RUN_SCHEMA_VERSION {
            return Err(HarnessError::SchemaVersionMismatch { found: self.schema_version, expected: RUN_SCHEMA_VERSION });
        }
        if self.n_agents < 2 {
            return bad(format!("n_agents must be at least 2, got {}", self.n_agents));
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if suite(&self.suite).is_none() {
            return bad(format!("unknown suite {:?}", self.suite));
        }
        if self.horizon == Some(0) {
            return bad("horizon must be positive".into());
        }
        self.flags.validate().map_err(HarnessError::Config)?;
        self.comm.validate().map_err(HarnessError::Config)?;
        self.backend.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        #[derive(Deserialize)]
        struct Version {
            #[serde(default)]
            schema_version: Option<u32>,
        }
        let v: Version = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(found) = v.schema_version.filter(|v| *v != RUN_SCHEMA_VERSION) {
            return Err(HarnessError::SchemaVersionMismatch { found, expected: RUN_SCHEMA_VERSION });
        }
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Digest of everything that shapes an episode. The output directory is
    /// left out so moving a run does not change it.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        sha256_hex(serde_json::to_vec(&c).expect("config serializes"))
    }

    /// Tasks of the suite with this run's agent count and horizon applied.
    pub fn tasks(&self) -> Result<Vec<Task>, HarnessError> {
        let tasks = suite(&self.suite).ok_or_else(|| HarnessError::Config(format!("unknown suite {:?}", self.suite)))?;
        Ok(tasks.into_iter().map(|t| self.adapt(t)).collect())
    }

    pub fn adapt(&self, mut task: Task) -> Task {
        task.n_agents = self.n_agents;
        if let Some(h) = self.horizon {
            task.horizon = h;
        }
        task
    }
}
