//! OpenAI-compatible chat-completions client.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cost_ledger::TokenUsage;

use super::{ProviderError, ProviderRequest, ProviderResponse};

/// Credentials are only ever read from variables with this prefix.
pub const API_KEY_ENV_PREFIX: &str = "XROUTER_API_KEY_";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveEndpoint {
    pub name: String,
    pub base_url: String,
    /// Defaults to `XROUTER_API_KEY_<NAME>` with the name upper-cased and
    /// non-alphanumerics replaced by `_`.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Catalog models served by this endpoint; empty means the model whose
    /// name equals the endpoint name.
    #[serde(default)]
    pub models: Vec<String>,
}

impl LiveEndpoint {
    pub fn key_env(&self) -> String {
        self.api_key_env.clone().unwrap_or_else(|| {
            let suffix: String = self
                .name
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() {
                        c.to_ascii_uppercase()
                    } else {
                        '_'
                    }
                })
                .collect();
            format!("{API_KEY_ENV_PREFIX}{suffix}")
        })
    }

    pub fn serves(&self, model: &str) -> bool {
        if self.models.is_empty() {
            self.name == model
        } else {
            self.models.iter().any(|m| m == model)
        }
    }

    fn api_key(&self) -> Result<String, ProviderError> {
        let var = self.key_env();
        if !var.starts_with(API_KEY_ENV_PREFIX) {
            return Err(ProviderError::NotConfigured(format!(
                "endpoint `{}`: credential variable `{var}` must start with {API_KEY_ENV_PREFIX}",
                self.name
            )));
        }
        std::env::var(&var).map_err(|_| {
            ProviderError::NotConfigured(format!("endpoint `{}`: `{var}` is not set", self.name))
        })
    }
}

fn parse_body(body: &str) -> Result<(String, TokenUsage), ProviderError> {
    let malformed = |what: &str| ProviderError::MalformedBody(what.to_string());
    let value: Value =
        serde_json::from_str(body).map_err(|e| ProviderError::MalformedBody(e.to_string()))?;
    let text = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("missing choices[0].message.content"))?;
    let usage = value
        .get("usage")
        .ok_or_else(|| malformed("missing usage block"))?;
    let field = |name: &str| {
        usage.get(name).and_then(Value::as_u64).ok_or_else(|| {
            ProviderError::MalformedBody(format!("usage.{name} missing or not a count"))
        })
    };
    Ok((
        text.to_string(),
        TokenUsage::new(field("prompt_tokens")?, field("completion_tokens")?),
    ))
}

/// One blocking POST to `{base_url}/chat/completions` bounded by the
/// request deadline.
pub fn invoke_live(
    req: &ProviderRequest,
    endpoint: &LiveEndpoint,
) -> Result<ProviderResponse, ProviderError> {
    req.check()?;
    let key = endpoint.api_key()?;
    let url = format!(
        "{}/chat/completions",
        endpoint.base_url.trim_end_matches('/')
    );
    let mut body = json!({
        "model": req.model_name,
        "messages": req.messages,
        "temperature": req.temperature,
        "top_p": req.top_p,
    });
    if let Some(limit) = req.max_output_tokens {
        body["max_tokens"] = json!(limit);
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(req.deadline_ms)))
        .http_status_as_error(false)
        .build()
        .into();
    let started = Instant::now();
    let mut response = agent
        .post(&url)
        .header("Authorization", &format!("Bearer {key}"))
        .send_json(&body)
        .map_err(|e| classify(e, req.deadline_ms))?;
    let status = response.status().as_u16();
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(|e| classify(e, req.deadline_ms))?;
    let latency_ms = started.elapsed().as_millis() as u64;
    if !(200..300).contains(&status) {
        return Err(ProviderError::Status { status, body: text });
    }
    let (content, usage) = parse_body(&text)?;
    Ok(ProviderResponse {
        text: content,
        usage,
        latency_ms,
        correctness_hint: None,
    })
}

fn classify(err: ureq::Error, deadline_ms: u64) -> ProviderError {
    match err {
        ureq::Error::Timeout(_) => ProviderError::Timeout(deadline_ms),
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => {
            ProviderError::Timeout(deadline_ms)
        }
        other => ProviderError::Transport(other.to_string()),
    }
}
