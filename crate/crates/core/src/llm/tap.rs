//! Backend decorators: transcript recording and replay of logged replies.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::{Backend, BackendError, BackendErrorKind, Completion, CompletionRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt: String,
    /// `None` when the call failed.
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<BackendError>,
    pub retries: u32,
    pub latency_ms: f64,
}

/// Records every call made through the wrapped backend.
pub struct TranscriptTap {
    inner: Arc<dyn Backend>,
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl TranscriptTap {
    pub fn new(inner: Arc<dyn Backend>) -> Self {
        TranscriptTap { inner, entries: Mutex::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Remove and return everything recorded so far.
    pub fn drain(&self) -> Vec<TranscriptEntry> {
        std::mem::take(&mut *self.entries.lock().unwrap_or_else(|e| e.into_inner()))
    }
}

impl Backend for TranscriptTap {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let start = Instant::now();
        let result = self.inner.complete(request);
        let latency_ms = start.elapsed().as_secs_f64() * 1000.0;
        let entry = match &result {
            Ok(c) => TranscriptEntry {
                prompt: request.prompt.clone(),
                reply: Some(c.text.clone()),
                error: None,
                retries: c.retries,
                latency_ms,
            },
            Err(e) => TranscriptEntry {
                prompt: request.prompt.clone(),
                reply: None,
                error: Some(e.clone()),
                retries: e.retries,
                latency_ms,
            },
        };
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).push(entry);
        result
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

/// Prefix of a logged prompt stored as a digest instead of full text.
pub const DIGEST_PREFIX: &str = "sha256:";

pub fn prompt_digest(prompt: &str) -> String {
    format!("{DIGEST_PREFIX}{}", hex::encode(Sha256::digest(prompt.as_bytes())))
}

fn prompt_matches(logged: &str, prompt: &str) -> bool {
    if logged.starts_with(DIGEST_PREFIX) {
        logged == prompt_digest(prompt)
    } else {
        logged == prompt
    }
}

/// Serves previously logged replies in order, checking that prompts match
/// (in full, or by digest when only the digest was logged).
pub struct LoggedBackend {
    queue: Mutex<VecDeque<(String, Result<String, BackendError>)>>,
}

impl LoggedBackend {
    pub fn new(log: impl IntoIterator<Item = (String, Result<String, BackendError>)>) -> Self {
        LoggedBackend { queue: Mutex::new(log.into_iter().collect()) }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl Backend for LoggedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let mut q = self.queue.lock().unwrap_or_else(|e| e.into_inner());
        let Some((prompt, reply)) = q.pop_front() else {
            return Err(BackendError::new(BackendErrorKind::Exhausted, "no logged reply left"));
        };
        if !prompt_matches(&prompt, &request.prompt) {
            return Err(BackendError::new(BackendErrorKind::Exhausted, "prompt differs from the logged one"));
        }
        reply.map(|text| Completion { text, retries: 0 })
    }

    fn describe(&self) -> String {
        "logged".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;
    impl Backend for Echo {
        fn complete(&self, r: &CompletionRequest) -> Result<Completion, BackendError> {
            Ok(Completion { text: r.prompt.to_uppercase(), retries: 0 })
        }
        fn describe(&self) -> String {
            "echo".into()
        }
    }

    #[test]
    fn tap_is_transparent_and_counts() {
        let tap = TranscriptTap::new(Arc::new(Echo));
        let r = CompletionRequest::new("abc");
        assert_eq!(tap.complete(&r).unwrap(), Echo.complete(&r).unwrap());
        assert_eq!(tap.len(), 1);
        assert_eq!(tap.entries()[0].reply.as_deref(), Some("ABC"));
    }

    #[test]
    fn logged_backend_replays_in_order() {
        let b = LoggedBackend::new(vec![("p1".into(), Ok("r1".into())), ("p2".into(), Ok("r2".into()))]);
        assert_eq!(b.complete(&CompletionRequest::new("p1")).unwrap().text, "r1");
        assert!(b.complete(&CompletionRequest::new("other")).is_err());
    }
}
