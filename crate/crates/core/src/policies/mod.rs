//! Router policies.
//!
//! A policy maps an [`Observation`] to a router message in wire form. The
//! baselines here derive their position in the episode from the transcript,
//! so they hold no per-episode state except the bandit's current arm.

mod bandit;
mod baseline;
mod external;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::episode::{EpisodeResult, Observation, Task};
use crate::orchestrator::EpisodeLimits;
use crate::tool_protocol::{ToolResultMessage, CALL_MODEL, SELECT_RESPONSE};

pub use bandit::{EpsilonGreedy, EpsilonSchedule};
pub use baseline::{AcceptRule, Cascade, Direct, DirectSource, SingleModel, DIRECT_FALLBACK};
pub use external::{
    DecisionRequest, DecisionResponse, DecisionTransport, External, HttpDecisionTransport,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("policy transport: {0}")]
    Transport(String),
    #[error("remote decision timed out after {0} ms")]
    Timeout(u64),
    #[error("remote returned HTTP {status}: {body}")]
    Remote { status: u16, body: String },
    #[error("policy configuration: {0}")]
    Config(String),
}

pub trait Policy: Send {
    fn name(&self) -> String;

    fn decide(&mut self, observation: &Observation) -> Result<Value, PolicyError>;

    /// Called once per finished episode.
    fn feedback(&mut self, _result: &EpisodeResult) {}
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn decide(&mut self, observation: &Observation) -> Result<Value, PolicyError> {
        (**self).decide(observation)
    }

    fn feedback(&mut self, result: &EpisodeResult) {
        (**self).feedback(result)
    }
}

/// Tool results delivered so far, oldest first.
pub fn tool_results(observation: &Observation) -> Vec<ToolResultMessage> {
    observation
        .transcript
        .iter()
        .filter(|m| m.get("role").and_then(Value::as_str) == Some("tool"))
        .filter_map(ToolResultMessage::from_value)
        .collect()
}

pub fn call_model_message(model: &str, payload: &str) -> Value {
    let arguments = json!({ "model": model, "payload": payload }).to_string();
    json!({
        "role": "assistant",
        "content": null,
        "tool_calls": [{
            "id": "call_0",
            "type": "function",
            "function": { "name": CALL_MODEL, "arguments": arguments }
        }]
    })
}

pub fn select_message(call_id: &str) -> Value {
    let arguments = json!({ "call_id": call_id }).to_string();
    json!({
        "role": "assistant",
        "content": null,
        "tool_calls": [{
            "id": "call_0",
            "type": "function",
            "function": { "name": SELECT_RESPONSE, "arguments": arguments }
        }]
    })
}

pub fn answer_message(text: &str) -> Value {
    json!({ "role": "assistant", "content": text })
}

fn default_timeout_ms() -> u64 {
    30_000
}

/// Policy selection as it appears in run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// Fixed text, or the task's reference answer when `text` is absent.
    Direct {
        #[serde(default)]
        text: Option<String>,
    },
    Single {
        model: String,
    },
    Cascade {
        order: Vec<String>,
        #[serde(default)]
        accept: AcceptRule,
    },
    Egreedy {
        #[serde(default)]
        epsilon: EpsilonSchedule,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        arms: Vec<String>,
    },
    External {
        url: String,
        /// Policy name the remote side should run.
        policy: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

impl PolicySpec {
    /// Parses the short names used on the command line and as the `model`
    /// field of chat requests: `direct`, `oracle`, `direct:<text>`,
    /// `single:<model>`, `cascade:<m1>,<m2>`, `egreedy`, `egreedy:<epsilon>`.
    pub fn parse_name(name: &str) -> Result<Self, PolicyError> {
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (name, None),
        };
        let bad = || PolicyError::Config(format!("unknown policy `{name}`"));
        match (head, arg) {
            ("direct", None) | ("oracle", None) => Ok(PolicySpec::Direct { text: None }),
            ("direct", Some(text)) => Ok(PolicySpec::Direct {
                text: Some(text.to_string()),
            }),
            ("single", Some(model)) if !model.is_empty() => Ok(PolicySpec::Single {
                model: model.to_string(),
            }),
            ("cascade", Some(list)) => {
                let order: Vec<String> = list
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect();
                if order.is_empty() {
                    return Err(bad());
                }
                Ok(PolicySpec::Cascade {
                    order,
                    accept: AcceptRule::default(),
                })
            }
            ("egreedy", None) => Ok(PolicySpec::Egreedy {
                epsilon: EpsilonSchedule::default(),
                seed: None,
                arms: vec![],
            }),
            ("egreedy", Some(eps)) => {
                let epsilon: f64 = eps.parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&epsilon) {
                    return Err(PolicyError::Config(format!(
                        "epsilon {epsilon} is outside [0, 1]"
                    )));
                }
                Ok(PolicySpec::Egreedy {
                    epsilon: EpsilonSchedule::Constant { epsilon },
                    seed: None,
                    arms: vec![],
                })
            }
            _ => Err(bad()),
        }
    }

    /// Canonical short name, used in reports.
    pub fn name(&self) -> String {
        match self {
            PolicySpec::Direct { text: None } => "oracle".into(),
            PolicySpec::Direct { text: Some(t) } => format!("direct:{t}"),
            PolicySpec::Single { model } => format!("single:{model}"),
            PolicySpec::Cascade { order, .. } => format!("cascade:{}", order.join(",")),
            PolicySpec::Egreedy { .. } => "egreedy".into(),
            PolicySpec::External { policy, .. } => format!("external:{policy}"),
        }
    }

    /// Instantiates the policy. `tasks` feeds the reference-answer oracle;
    /// `seed` seeds the bandit unless it carries its own.
    pub fn build(
        &self,
        tasks: &[Task],
        seed: u64,
        limits: &EpisodeLimits,
    ) -> Result<Box<dyn Policy>, PolicyError> {
        Ok(match self {
            PolicySpec::Direct { text: Some(t) } => {
                Box::new(Direct::new(DirectSource::Fixed(t.clone())))
            }
            PolicySpec::Direct { text: None } => {
                let answers: BTreeMap<String, String> = tasks
                    .iter()
                    .map(|t| (t.id.clone(), t.reference_answer.clone()))
                    .collect();
                Box::new(Direct::new(DirectSource::Oracle(answers)))
            }
            PolicySpec::Single { model } => Box::new(SingleModel::new(model.clone())),
            PolicySpec::Cascade { order, accept } => {
                Box::new(Cascade::new(order.clone(), *accept, limits)?)
            }
            PolicySpec::Egreedy {
                epsilon,
                seed: s,
                arms,
            } => Box::new(EpsilonGreedy::new(
                *epsilon,
                s.unwrap_or(seed),
                arms.clone(),
            )?),
            PolicySpec::External {
                url,
                policy,
                timeout_ms,
            } => Box::new(External::new(HttpDecisionTransport::new(
                url.clone(),
                policy.clone(),
                *timeout_ms,
            ))),
        })
    }
}
