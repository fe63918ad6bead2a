//! Prompt templates and completion backends.

mod backend;
mod http;
mod scripted;
mod tap;
mod template;

pub use backend::{complete, Backend, BackendError, BackendErrorKind, BackendSpec, Completion, CompletionRequest};
pub use http::{request_body, HttpBackend, HttpSpec};
pub use scripted::{
    prompt_kind, scripted_reply, PromptKind, ScriptedBackend, RULESETS, TIP_FAILURES, TIP_HANDLING, TIP_LOCATIONS,
    TIP_SPLIT,
};
pub use tap::{prompt_digest, LoggedBackend, TranscriptEntry, TranscriptTap, DIGEST_PREFIX};
pub use template::{
    render_template, PromptTemplate, TemplateError, TemplateName, COST_ESTIMATION_INSTRUCTION, KNOWLEDGE_DELIMITER,
};
