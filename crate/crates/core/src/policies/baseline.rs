//! Fixed-strategy baselines: direct answers, one model, and escalation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::episode::Observation;
use crate::orchestrator::EpisodeLimits;

use super::{
    answer_message, call_model_message, select_message, tool_results, Policy, PolicyError,
};

/// Answer given by an oracle direct policy for tasks it has no entry for.
pub const DIRECT_FALLBACK: &str = "I don't know.";

#[derive(Debug, Clone, PartialEq)]
pub enum DirectSource {
    /// Reference answers by task id.
    Oracle(BTreeMap<String, String>),
    Fixed(String),
}

/// Always answers without calling any model.
#[derive(Debug, Clone)]
pub struct Direct {
    source: DirectSource,
}

impl Direct {
    pub fn new(source: DirectSource) -> Self {
        Self { source }
    }
}

impl Policy for Direct {
    fn name(&self) -> String {
        match &self.source {
            DirectSource::Oracle(_) => "oracle".into(),
            DirectSource::Fixed(t) => format!("direct:{t}"),
        }
    }

    fn decide(&mut self, observation: &Observation) -> Result<Value, PolicyError> {
        let text = match &self.source {
            DirectSource::Oracle(answers) => answers
                .get(&observation.task_id)
                .map(String::as_str)
                .unwrap_or(DIRECT_FALLBACK),
            DirectSource::Fixed(t) => t.as_str(),
        };
        Ok(answer_message(text))
    }
}

/// Calls one model with the task prompt, then selects its response.
#[derive(Debug, Clone)]
pub struct SingleModel {
    model: String,
}

impl SingleModel {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
        }
    }
}

impl Policy for SingleModel {
    fn name(&self) -> String {
        format!("single:{}", self.model)
    }

    fn decide(&mut self, observation: &Observation) -> Result<Value, PolicyError> {
        Ok(match tool_results(observation).last() {
            None => call_model_message(&self.model, &observation.prompt),
            Some(result) => select_message(&result.tool_call_id),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptRule {
    /// Accept when the backend reports a correct response; without a hint
    /// the response is accepted as is.
    #[default]
    CorrectnessHint,
    AlwaysAccept,
}

/// Tries models in order, selecting the first accepted response and the
/// last response when every model was tried.
#[derive(Debug, Clone)]
pub struct Cascade {
    order: Vec<String>,
    accept: AcceptRule,
}

impl Cascade {
    pub fn new(
        order: Vec<String>,
        accept: AcceptRule,
        limits: &EpisodeLimits,
    ) -> Result<Self, PolicyError> {
        if order.is_empty() {
            return Err(PolicyError::Config(
                "cascade needs at least one model".into(),
            ));
        }
        if order.len() as u32 > limits.max_turns.saturating_sub(1) {
            return Err(PolicyError::Config(format!(
                "cascade of {} models needs {} turns, limit is {}",
                order.len(),
                order.len() + 1,
                limits.max_turns
            )));
        }
        Ok(Self { order, accept })
    }
}

impl Policy for Cascade {
    fn name(&self) -> String {
        format!("cascade:{}", self.order.join(","))
    }

    fn decide(&mut self, observation: &Observation) -> Result<Value, PolicyError> {
        let results = tool_results(observation);
        let Some(last) = results.last() else {
            return Ok(call_model_message(&self.order[0], &observation.prompt));
        };
        let accepted = last.error.is_none()
            && match self.accept {
                AcceptRule::AlwaysAccept => true,
                AcceptRule::CorrectnessHint => last.metadata.correctness_hint != Some(false),
            };
        Ok(if accepted || results.len() >= self.order.len() {
            select_message(&last.tool_call_id)
        } else {
            call_model_message(&self.order[results.len()], &observation.prompt)
        })
    }
}
