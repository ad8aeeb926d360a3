//! Model backends behind one invocation interface.
//!
//! Three backends exist: a deterministic simulator driven by catalog
//! capability profiles, a response cache keyed by normalized queries, and an
//! OpenAI-compatible HTTP client. [`ProviderPool`] routes each call by the
//! model's `provider_kind` and layers the cache and fault injection on top.

mod cache;
mod live;
mod pool;
mod simulated;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{DifficultyTier, ModelDescriptor};
use crate::cost_ledger::{CallOutcome, TokenUsage};
use crate::digest::content_digest;

pub use cache::{cache_get_or_invoke, CacheEntry, CacheStore};
pub use live::{invoke_live, LiveEndpoint, API_KEY_ENV_PREFIX};
pub use pool::{FaultKind, FaultPlan, ProviderPool, ScriptedFault};
pub use simulated::{invoke_simulated, DISTRACTORS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub model_name: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: Option<u64>,
    pub deadline_ms: u64,
}

impl ProviderRequest {
    pub fn check(&self) -> Result<(), ProviderError> {
        if self.messages.is_empty() {
            return Err(ProviderError::InvalidRequest(
                "messages must not be empty".into(),
            ));
        }
        if self.deadline_ms == 0 {
            return Err(ProviderError::InvalidRequest(
                "deadline_ms must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Stand-in token count over every message body.
    pub fn prompt_tokens(&self) -> u64 {
        self.messages.iter().map(|m| count_tokens(&m.content)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub text: String,
    pub usage: TokenUsage,
    pub latency_ms: u64,
    /// Only simulated and cached backends know whether they were right.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness_hint: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ProviderError {
    #[error("deadline of {0} ms exceeded")]
    Timeout(u64),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response body: {0}")]
    MalformedBody(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("cache store: {0}")]
    Store(String),
    #[error("model `{0}` has no capability profile")]
    MissingCapability(String),
    #[error("no cached response for model `{0}`")]
    CacheMiss(String),
    #[error("not configured: {0}")]
    NotConfigured(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("injected fault")]
    Injected,
}

impl ProviderError {
    /// Ledger outcome for a failed attempt.
    pub fn outcome(&self) -> CallOutcome {
        match self {
            ProviderError::Timeout(_) => CallOutcome::Timeout,
            _ => CallOutcome::ProviderError,
        }
    }
}

/// Per-invocation facts the simulator needs beyond the request itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationContext {
    pub seed: u64,
    pub task_key: String,
    pub tier: DifficultyTier,
    pub reference_answer: String,
    /// Attempt ordinal for the (task, model) pair; varies the simulated draw.
    pub attempt: u64,
    /// Retry index of this attempt within its call, used by scripted faults.
    pub retry: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub response: ProviderResponse,
    pub cached: bool,
}

pub trait Provider: Send + Sync {
    fn invoke(
        &self,
        request: &ProviderRequest,
        descriptor: &ModelDescriptor,
        ctx: &InvocationContext,
    ) -> Result<Invocation, ProviderError>;

    /// Number of backend invocations performed so far (cache hits excluded).
    fn inner_invocations(&self) -> u64 {
        0
    }
}

/// Whitespace word count times 4/3, rounded up.
pub fn count_tokens(text: &str) -> u64 {
    let words = text.split_whitespace().count() as u64;
    (words * 4).div_ceil(3)
}

pub(crate) fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Cache key for a request: digest of its canonical form.
pub fn normalize_query(req: &ProviderRequest) -> String {
    let canonical = serde_json::json!([
        req.model_name,
        req.messages
            .iter()
            .map(|m| [m.role.as_str().to_owned(), collapse_whitespace(&m.content)])
            .collect::<Vec<_>>(),
        format!("{:.2}", req.temperature),
        format!("{:.2}", req.top_p),
    ]);
    content_digest(canonical.to_string().as_bytes())
}
