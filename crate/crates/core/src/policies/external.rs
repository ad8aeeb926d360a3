//! Policies whose decisions come from another process.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::episode::{EpisodeResult, Observation};

use super::{Policy, PolicyError};

/// Body of a remote decision request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub policy: String,
    pub observation: Observation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub message: Value,
}

pub trait DecisionTransport: Send {
    fn decide(&mut self, observation: &Observation) -> Result<Value, PolicyError>;

    fn feedback(&mut self, _result: &EpisodeResult) {}
}

/// Forwards observations verbatim and returns the remote message verbatim;
/// validation happens in the episode machine like for any other policy.
pub struct External<T: DecisionTransport> {
    transport: T,
}

impl<T: DecisionTransport> External<T> {
    pub fn new(transport: T) -> Self {
        Self { transport }
    }
}

impl<T: DecisionTransport> Policy for External<T> {
    fn name(&self) -> String {
        "external".into()
    }

    fn decide(&mut self, observation: &Observation) -> Result<Value, PolicyError> {
        self.transport.decide(observation)
    }

    fn feedback(&mut self, result: &EpisodeResult) {
        self.transport.feedback(result);
    }
}

/// JSON over HTTP: `POST <url>` with a [`DecisionRequest`], expecting a
/// [`DecisionResponse`].
#[derive(Debug)]
pub struct HttpDecisionTransport {
    url: String,
    policy: String,
    timeout_ms: u64,
    agent: ureq::Agent,
}

impl HttpDecisionTransport {
    pub fn new(url: String, policy: String, timeout_ms: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url,
            policy,
            timeout_ms,
            agent,
        }
    }
}

impl DecisionTransport for HttpDecisionTransport {
    fn decide(&mut self, observation: &Observation) -> Result<Value, PolicyError> {
        let body = DecisionRequest {
            policy: self.policy.clone(),
            observation: observation.clone(),
        };
        let map_err = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => PolicyError::Timeout(self.timeout_ms),
            other => PolicyError::Transport(other.to_string()),
        };
        let mut response = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(map_err)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(map_err)?;
        if !(200..300).contains(&status) {
            return Err(PolicyError::Remote { status, body: text });
        }
        let decoded: DecisionResponse = serde_json::from_str(&text)
            .map_err(|e| PolicyError::Transport(format!("undecodable decision body: {e}")))?;
        Ok(decoded.message)
    }
}
