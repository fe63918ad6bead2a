//! Completion requests and the backend abstraction.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::http::{HttpBackend, HttpSpec};
use super::scripted::ScriptedBackend;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest { prompt: prompt.into(), temperature: 0.7, top_p: 1.0, max_tokens: 256, seed: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::new(BackendErrorKind::InvalidRequest, "temperature must be >= 0"));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::new(BackendErrorKind::InvalidRequest, "top_p must be in (0, 1]"));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::new(BackendErrorKind::InvalidRequest, "max_tokens must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    /// Failed attempts before this reply.
    pub retries: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendErrorKind {
    InvalidRequest,
    Auth,
    Timeout,
    Transport,
    Server,
    RateLimited,
    RetriesExhausted,
    MalformedResponse,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind:?}: {message}")]
pub struct BackendError {
    pub kind: BackendErrorKind,
    pub message: String,
    #[serde(default)]
    pub retries: u32,
}

impl BackendError {
    pub fn new(kind: BackendErrorKind, message: impl Into<String>) -> Self {
        BackendError { kind, message: message.into(), retries: 0 }
    }
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError>;

    /// Short label for logs and records.
    fn describe(&self) -> String;
}

/// How to build a backend; stored in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Scripted {
        #[serde(default = "default_ruleset")]
        ruleset: String,
    },
    Http(HttpSpec),
}

fn default_ruleset() -> String {
    "default".to_string()
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Scripted { ruleset: default_ruleset() }
    }
}

impl BackendSpec {
    pub fn is_scripted(&self) -> bool {
        matches!(self, BackendSpec::Scripted { .. })
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        match self {
            BackendSpec::Scripted { ruleset } => ScriptedBackend::new(ruleset).map(|_| ()),
            BackendSpec::Http(spec) => spec.validate(),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Backend>, BackendError> {
        Ok(match self {
            BackendSpec::Scripted { ruleset } => Arc::new(ScriptedBackend::new(ruleset)?),
            BackendSpec::Http(spec) => Arc::new(HttpBackend::new(spec.clone())?),
        })
    }
}

/// Build the backend described by `spec` and run one request.
pub fn complete(spec: &BackendSpec, request: &CompletionRequest) -> Result<Completion, BackendError> {
    request.validate()?;
    spec.build()?.complete(request)
}
