//! Blocking client for OpenAI-compatible chat-completion endpoints.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backend::{Backend, BackendError, BackendErrorKind, Completion, CompletionRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSpec {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; `None` sends no auth.
    pub api_key_env: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_initial_ms: u64,
    /// Ceiling on the summed sleep across all retries of one request.
    pub backoff_ceiling_ms: u64,
    pub max_in_flight: usize,
}

impl Default for HttpSpec {
    fn default() -> Self {
        HttpSpec {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_initial_ms: 500,
            backoff_ceiling_ms: 30_000,
            max_in_flight: 4,
        }
    }
}

impl HttpSpec {
    pub fn validate(&self) -> Result<(), BackendError> {
        let invalid = |m: &str| Err(BackendError::new(BackendErrorKind::InvalidRequest, m));
        let rest = match self.endpoint.split_once("://") {
            Some(("http" | "https", rest)) => rest,
            _ => return invalid("endpoint must be an http(s) URL"),
        };
        let host = rest.split(['/', '?', '#']).next().unwrap_or("");
        if host.is_empty() || host.contains(char::is_whitespace) {
            return invalid("endpoint has no host");
        }
        if self.model.trim().is_empty() {
            return invalid("model name is empty");
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return invalid("timeout must be positive");
        }
        if self.max_in_flight == 0 {
            return invalid("max_in_flight must be at least 1");
        }
        Ok(())
    }

    /// Sleep before retry `attempt` (0-based): doubling from the initial
    /// delay, cut so the running total never passes the ceiling.
    pub fn backoff_delay(&self, attempt: u32, slept_ms: u64) -> u64 {
        let want = self.backoff_initial_ms.saturating_mul(1u64 << attempt.min(32));
        want.min(self.backoff_ceiling_ms.saturating_sub(slept_ms))
    }
}

/// Wire body of one request. Public so tests can check exactly what is sent.
pub fn request_body(model: &str, request: &CompletionRequest) -> Value {
    let mut body = json!({
        "model": model,
        "messages": [{"role": "user", "content": request.prompt}],
        "temperature": request.temperature,
        "top_p": request.top_p,
        "max_tokens": request.max_tokens,
    });
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    body
}

fn extract_text(body: &Value) -> Option<String> {
    let choice = body.get("choices")?.get(0)?;
    choice
        .get("message")
        .and_then(|m| m.get("content"))
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpBackend {
    spec: HttpSpec,
    agent: ureq::Agent,
    gate: Gate,
    sleeper: Sleeper,
}

enum Attempt {
    Done(String),
    Retry(BackendError),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(spec: HttpSpec) -> Result<Self, BackendError> {
        spec.validate()?;
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs_f64(spec.timeout_secs)).build();
        let gate = Gate { in_flight: Mutex::new(0), freed: Condvar::new(), cap: spec.max_in_flight };
        Ok(HttpBackend { spec, agent, gate, sleeper: Arc::new(std::thread::sleep) })
    }

    /// Replace the retry sleep, e.g. to record delays in tests.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Arc::new(sleeper);
        self
    }

    fn api_key(&self) -> Result<Option<String>, BackendError> {
        match &self.spec.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| {
                BackendError::new(BackendErrorKind::Auth, format!("environment variable {var} is not set"))
            }),
        }
    }

    fn attempt(&self, body: &Value, key: Option<&str>) -> Attempt {
        let scrub = |text: String| match key {
            Some(k) if !k.is_empty() => text.replace(k, "***"),
            _ => text,
        };
        let mut req = self.agent.post(&self.spec.endpoint).set("Content-Type", "application/json");
        if let Some(k) = key {
            req = req.set("Authorization", &format!("Bearer {k}"));
        }
        match req.send_json(body.clone()) {
            Ok(resp) => match resp.into_json::<Value>() {
                Ok(v) => match extract_text(&v) {
                    Some(text) => Attempt::Done(text),
                    None => Attempt::Fatal(BackendError::new(
                        BackendErrorKind::MalformedResponse,
                        "response has no choices[0] text",
                    )),
                },
                Err(e) => Attempt::Fatal(BackendError::new(BackendErrorKind::MalformedResponse, scrub(e.to_string()))),
            },
            Err(ureq::Error::Status(code, resp)) => {
                let detail: String = resp.into_string().unwrap_or_default().chars().take(200).collect();
                let msg = scrub(format!("status {code}: {detail}"));
                match code {
                    401 | 403 => Attempt::Fatal(BackendError::new(BackendErrorKind::Auth, msg)),
                    429 => Attempt::Retry(BackendError::new(BackendErrorKind::RateLimited, msg)),
                    500..=599 => Attempt::Retry(BackendError::new(BackendErrorKind::Server, msg)),
                    _ => Attempt::Fatal(BackendError::new(BackendErrorKind::InvalidRequest, msg)),
                }
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = scrub(t.to_string());
                let kind = if msg.contains("timed out") { BackendErrorKind::Timeout } else { BackendErrorKind::Transport };
                Attempt::Retry(BackendError::new(kind, msg))
            }
        }
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        request.validate()?;
        let key = self.api_key()?;
        let body = request_body(&self.spec.model, request);
        let _permit = self.gate.acquire();
        let mut slept = 0u64;
        let mut retries = 0u32;
        loop {
            match self.attempt(&body, key.as_deref()) {
                Attempt::Done(text) => return Ok(Completion { text, retries }),
                Attempt::Fatal(mut e) => {
                    e.retries = retries;
                    return Err(e);
                }
                Attempt::Retry(e) => {
                    if retries >= self.spec.max_retries {
                        log::warn!("completion failed after {retries} retries: {}", e.message);
                        return Err(BackendError {
                            kind: BackendErrorKind::RetriesExhausted,
                            message: format!("{:?}: {}", e.kind, e.message),
                            retries,
                        });
                    }
                    let delay = self.spec.backoff_delay(retries, slept);
                    log::debug!("retrying completion in {delay} ms after {:?}", e.kind);
                    (self.sleeper)(Duration::from_millis(delay));
                    slept += delay;
                    retries += 1;
                }
            }
        }
    }

    fn describe(&self) -> String {
        format!("http:{}", self.spec.model)
    }
}
