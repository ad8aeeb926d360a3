//! Bounded multi-turn routing episodes.
//!
//! An [`Episode`] is driven one router message at a time through
//! [`Episode::step`], which lets both the local loop ([`run_episode`]) and the
//! HTTP environment share one state machine. Every step consumes a turn;
//! reaching `max_turns` without a terminal answer fails the episode.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::catalog::{render_catalog_prompt, Catalog, DifficultyTier, ModelTier};
use crate::cost_ledger::{
    call_cost, normalize_cost, CallRecord, CostConfig, Ledger, Money, TokenUsage,
};
use crate::digest::hash64;
use crate::orchestrator::{
    dispatch_turn, Clock, DispatchEnv, DispatchError, EpisodeLimits, TaskContext, VirtualClock,
};
use crate::policies::Policy;
use crate::providers::{collapse_whitespace, count_tokens, Provider, ProviderPool};
use crate::reward::{reward, Outcome, RewardParams};
use crate::tool_protocol::{
    parse_router_message, serialize_router_message, serialize_tool_result, validate_against, Phase,
    ProtocolErrorCode, RouterMessage, ToolCall, Violation,
};

// ---- tasks ----------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verifier {
    #[default]
    ExactMatch,
    NumericMatch,
    Contains,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Difficulty {
    pub pass_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<DifficultyTier>,
}

impl Default for Difficulty {
    fn default() -> Self {
        Self {
            pass_rate: 0.5,
            tier: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub id: String,
    pub prompt: String,
    pub reference_answer: String,
    #[serde(default)]
    pub verifier: Verifier,
    #[serde(default)]
    pub difficulty: Difficulty,
}

impl Task {
    /// Explicit tier if present, else derived from the pass rate.
    pub fn tier(&self, thresholds: StratifyThresholds) -> DifficultyTier {
        self.difficulty
            .tier
            .unwrap_or_else(|| thresholds.classify(self.difficulty.pass_rate))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("task file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate task id `{0}`")]
    DuplicateId(String),
    #[error("task `{id}`: pass_rate {value} is outside [0, 1]")]
    PassRate { id: String, value: String },
    #[error("task file is empty")]
    Empty,
    #[error("stratification thresholds need 0 <= hard_max < easy_min <= 1, got ({easy_min}, {hard_max})")]
    InvertedThresholds { easy_min: String, hard_max: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// One task per non-blank line; ids must be unique.
pub fn load_tasks_jsonl(text: &str) -> Result<Vec<Task>, TaskError> {
    let mut tasks = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let task: Task = serde_json::from_str(line).map_err(|e| TaskError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&task.difficulty.pass_rate) {
            return Err(TaskError::PassRate {
                id: task.id,
                value: task.difficulty.pass_rate.to_string(),
            });
        }
        if !ids.insert(task.id.clone()) {
            return Err(TaskError::DuplicateId(task.id));
        }
        tasks.push(task);
    }
    if tasks.is_empty() {
        return Err(TaskError::Empty);
    }
    Ok(tasks)
}

pub fn load_tasks_file(path: &Path) -> Result<Vec<Task>, TaskError> {
    let text = std::fs::read_to_string(path).map_err(|e| TaskError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    load_tasks_jsonl(&text)
}

pub fn tasks_to_jsonl(tasks: &[Task]) -> String {
    tasks
        .iter()
        .map(|t| serde_json::to_string(t).expect("task serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratifyThresholds {
    pub easy_min: f64,
    pub hard_max: f64,
}

impl Default for StratifyThresholds {
    fn default() -> Self {
        Self {
            easy_min: 0.7,
            hard_max: 0.3,
        }
    }
}

impl StratifyThresholds {
    pub fn new(easy_min: f64, hard_max: f64) -> Result<Self, TaskError> {
        if !(0.0 <= hard_max && hard_max < easy_min && easy_min <= 1.0) {
            return Err(TaskError::InvertedThresholds {
                easy_min: easy_min.to_string(),
                hard_max: hard_max.to_string(),
            });
        }
        Ok(Self { easy_min, hard_max })
    }

    pub fn classify(&self, pass_rate: f64) -> DifficultyTier {
        if pass_rate >= self.easy_min {
            DifficultyTier::Easy
        } else if pass_rate < self.hard_max {
            DifficultyTier::Hard
        } else {
            DifficultyTier::Medium
        }
    }
}

/// Labels every task's tier from its pass rate, overwriting existing labels.
pub fn stratify_tasks(tasks: &[Task], thresholds: (f64, f64)) -> Result<Vec<Task>, TaskError> {
    let t = StratifyThresholds::new(thresholds.0, thresholds.1)?;
    Ok(tasks
        .iter()
        .map(|task| {
            let mut task = task.clone();
            task.difficulty.tier = Some(t.classify(task.difficulty.pass_rate));
            task
        })
        .collect())
}

fn numbers_match(a: &str, b: &str) -> bool {
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => {
            x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs())
        }
        _ => false,
    }
}

pub fn evaluate_success(final_answer: &str, task: &Task) -> bool {
    match task.verifier {
        Verifier::ExactMatch => final_answer.trim() == task.reference_answer.trim(),
        Verifier::NumericMatch => numbers_match(final_answer, &task.reference_answer),
        Verifier::Contains => collapse_whitespace(final_answer)
            .contains(collapse_whitespace(&task.reference_answer).as_str()),
    }
}

// ---- episode state --------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Running,
    DoneDirect,
    DoneSynthesized,
    DoneSelected,
    Failed,
}

impl EpisodeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeStatus::Running => "running",
            EpisodeStatus::DoneDirect => "done_direct",
            EpisodeStatus::DoneSynthesized => "done_synthesized",
            EpisodeStatus::DoneSelected => "done_selected",
            EpisodeStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureReason {
    Protocol {
        code: ProtocolErrorCode,
        detail: String,
    },
    Validation {
        violations: Vec<Violation>,
    },
    TurnsExhausted {
        max_turns: u32,
    },
    BudgetExceeded {
        accumulated: Money,
        projected: Money,
        budget: Money,
    },
    Transport {
        detail: String,
    },
    Internal {
        detail: String,
    },
}

/// Shared, immutable inputs of an episode.
#[derive(Clone)]
pub struct EpisodeConfig {
    pub catalog: Arc<Catalog>,
    pub limits: EpisodeLimits,
    pub reward: RewardParams,
    pub cost: CostConfig,
    pub seed: u64,
    pub thresholds: StratifyThresholds,
    pub provider: Arc<dyn Provider>,
    pub clock: Arc<dyn Clock>,
}

impl EpisodeConfig {
    /// Defaults everywhere, an uncached simulated pool and a virtual clock.
    pub fn new(catalog: Catalog, seed: u64) -> Self {
        Self {
            catalog: Arc::new(catalog),
            limits: EpisodeLimits::default(),
            reward: RewardParams::default(),
            cost: CostConfig::default(),
            seed,
            thresholds: StratifyThresholds::default(),
            provider: Arc::new(ProviderPool::new()),
            clock: Arc::new(VirtualClock::default()),
        }
    }
}

impl std::fmt::Debug for EpisodeConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EpisodeConfig")
            .field("catalog_version", &self.catalog.version)
            .field("limits", &self.limits)
            .field("reward", &self.reward)
            .field("cost", &self.cost)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

/// Deterministic episode id for a (task, seed) pair.
pub fn episode_id(task_id: &str, seed: u64) -> String {
    format!(
        "ep-{:016x}",
        hash64(&[b"episode", task_id.as_bytes(), &seed.to_be_bytes()])
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub episode_id: String,
    pub task_id: String,
    pub catalog_version: u64,
    pub turn_index: u32,
    pub history: Vec<Value>,
    pub ledger: Ledger,
    /// Provider spend; always equals the ledger total.
    pub accumulated_cost: Money,
    pub router_cost: Money,
    pub status: EpisodeStatus,
    pub final_answer: Option<String>,
    pub failure: Option<FailureReason>,
    /// Tool-result texts delivered to the router, by call id.
    pub delivered: BTreeMap<String, String>,
    pub attempt_counters: BTreeMap<String, u64>,
}

impl EpisodeState {
    pub fn delivered_call_ids(&self) -> BTreeSet<String> {
        self.delivered.keys().cloned().collect()
    }

    pub fn tool_called(&self) -> bool {
        !self.delivered.is_empty() || !self.ledger.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub tier: ModelTier,
    /// Expected cost of one call on this task at nominal token counts.
    pub nominal_cost_nano: u64,
}

/// What a policy sees before each decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub task_id: String,
    pub prompt: String,
    pub catalog: String,
    pub models: Vec<ModelSummary>,
    pub transcript: Vec<Value>,
    pub remaining_turns: u32,
    pub turn_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub task_id: String,
    pub status: EpisodeStatus,
    pub success: bool,
    pub final_answer: Option<String>,
    /// Provider plus router spend.
    pub cost: Money,
    pub provider_cost: Money,
    pub router_cost: Money,
    pub normalized_cost: f64,
    pub reward: f64,
    pub turns: u32,
    pub failure: Option<FailureReason>,
    pub records: Vec<CallRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EpisodeError {
    #[error("episode already finished with status {}", .0.as_str())]
    Finished(EpisodeStatus),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub done: bool,
    /// Tool-result messages appended by this step.
    pub tool_results: Vec<Value>,
}

pub struct Episode {
    task: Task,
    config: Arc<EpisodeConfig>,
    catalog_text: String,
    state: EpisodeState,
}

impl Episode {
    pub fn new(task: Task, config: Arc<EpisodeConfig>) -> Self {
        let state = EpisodeState {
            episode_id: episode_id(&task.id, config.seed),
            task_id: task.id.clone(),
            catalog_version: config.catalog.version,
            turn_index: 0,
            history: Vec::new(),
            ledger: Ledger::new(),
            accumulated_cost: Money::ZERO,
            router_cost: Money::ZERO,
            status: EpisodeStatus::Running,
            final_answer: None,
            failure: None,
            delivered: BTreeMap::new(),
            attempt_counters: BTreeMap::new(),
        };
        Self {
            catalog_text: render_catalog_prompt(&config.catalog),
            task,
            config,
            state,
        }
    }

    pub fn state(&self) -> &EpisodeState {
        &self.state
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn is_running(&self) -> bool {
        self.state.status == EpisodeStatus::Running
    }

    pub fn observation(&self) -> Observation {
        let prompt_tokens = count_tokens(&self.task.prompt);
        let models = self
            .config
            .catalog
            .visible()
            .map(|m| {
                let completion = m
                    .capability
                    .map(|c| (c.output_tokens_min + c.output_tokens_max) / 2)
                    .unwrap_or(0);
                ModelSummary {
                    name: m.name.clone(),
                    tier: m.tier,
                    nominal_cost_nano: call_cost(
                        TokenUsage::new(prompt_tokens, completion),
                        m.prices,
                    )
                    .map(Money::nanos)
                    .unwrap_or(u64::MAX),
                }
            })
            .collect();
        Observation {
            task_id: self.task.id.clone(),
            prompt: self.task.prompt.clone(),
            catalog: self.catalog_text.clone(),
            models,
            transcript: self.state.history.clone(),
            remaining_turns: self
                .config
                .limits
                .max_turns
                .saturating_sub(self.state.turn_index),
            turn_index: self.state.turn_index,
        }
    }

    fn router_usage(&self, action: &Value) -> TokenUsage {
        let context = count_tokens(&self.task.prompt)
            + count_tokens(&self.catalog_text)
            + self
                .state
                .history
                .iter()
                .map(|v| count_tokens(&v.to_string()))
                .sum::<u64>();
        TokenUsage::new(context, count_tokens(&action.to_string()))
    }

    fn finish(
        &mut self,
        status: EpisodeStatus,
        answer: Option<String>,
        failure: Option<FailureReason>,
    ) {
        self.state.status = status;
        self.state.final_answer = answer;
        self.state.failure = failure;
    }

    /// Ends a running episode from outside the machine, e.g. when the policy
    /// transport fails. No-op on finished episodes.
    pub fn fail(&mut self, reason: FailureReason) {
        if self.is_running() {
            self.finish(EpisodeStatus::Failed, None, Some(reason));
        }
    }

    /// Applies one router message.
    pub fn step(&mut self, action: &Value) -> Result<StepOutcome, EpisodeError> {
        if !self.is_running() {
            return Err(EpisodeError::Finished(self.state.status));
        }
        let usage = self.router_usage(action);
        match call_cost(usage, self.config.cost.router_self_prices)
            .and_then(|c| self.state.router_cost.checked_add(c))
        {
            Ok(total) => self.state.router_cost = total,
            Err(e) => {
                self.fail(FailureReason::Internal {
                    detail: e.to_string(),
                });
                return Ok(StepOutcome {
                    done: true,
                    tool_results: vec![],
                });
            }
        }
        let phase = if self.state.tool_called() {
            Phase::AfterToolCalls
        } else {
            Phase::BeforeToolCalls
        };
        let turn = self.state.turn_index;
        self.state.turn_index += 1;

        let message = match parse_router_message(action, phase) {
            Ok(m) => m,
            Err(e) => {
                self.state.history.push(action.clone());
                self.fail(FailureReason::Protocol {
                    code: e.code,
                    detail: e.detail,
                });
                return Ok(StepOutcome {
                    done: true,
                    tool_results: vec![],
                });
            }
        };
        self.state.history.push(serialize_router_message(&message));

        let mut tool_results = Vec::new();
        match message {
            RouterMessage::DirectAnswer(text) => {
                self.finish(EpisodeStatus::DoneDirect, Some(text), None)
            }
            RouterMessage::FinalSynthesis(text) => {
                self.finish(EpisodeStatus::DoneSynthesized, Some(text), None)
            }
            RouterMessage::ToolCalls(calls) => {
                let verdict = validate_against(
                    &calls,
                    &self.config.catalog,
                    &self.state.delivered_call_ids(),
                    &self.config.limits,
                );
                if !verdict.is_ok() {
                    self.fail(FailureReason::Validation {
                        violations: verdict.violations,
                    });
                } else if let [ToolCall::SelectResponse { source_call_id }] = calls.as_slice() {
                    let text = self.state.delivered[source_call_id].clone();
                    self.finish(EpisodeStatus::DoneSelected, Some(text), None);
                } else {
                    let model_calls: Vec<_> = calls
                        .into_iter()
                        .filter_map(|c| match c {
                            ToolCall::CallModel(m) => Some(m),
                            ToolCall::SelectResponse { .. } => None,
                        })
                        .collect();
                    tool_results = self.dispatch(turn, &model_calls);
                }
            }
        }
        if self.is_running() && self.state.turn_index >= self.config.limits.max_turns {
            self.fail(FailureReason::TurnsExhausted {
                max_turns: self.config.limits.max_turns,
            });
        }
        Ok(StepOutcome {
            done: !self.is_running(),
            tool_results,
        })
    }

    fn dispatch(&mut self, turn: u32, calls: &[crate::tool_protocol::CallModel]) -> Vec<Value> {
        let config = self.config.clone();
        let task_ctx = TaskContext {
            seed: config.seed,
            task_key: self.task.id.clone(),
            tier: self.task.tier(config.thresholds),
            reference_answer: self.task.reference_answer.clone(),
        };
        let env = DispatchEnv {
            catalog: &config.catalog,
            limits: &config.limits,
            provider: config.provider.as_ref(),
            clock: config.clock.as_ref(),
        };
        let outcome = match dispatch_turn(
            calls,
            &self.state.episode_id,
            turn,
            &task_ctx,
            self.state.accumulated_cost,
            &mut self.state.attempt_counters,
            &env,
        ) {
            Ok(o) => o,
            Err(DispatchError::BudgetExceeded {
                accumulated,
                projected,
                budget,
            }) => {
                self.fail(FailureReason::BudgetExceeded {
                    accumulated,
                    projected,
                    budget,
                });
                return vec![];
            }
            Err(e) => {
                self.fail(FailureReason::Internal {
                    detail: e.to_string(),
                });
                return vec![];
            }
        };
        for record in outcome.records() {
            self.state.ledger.append(record.clone());
        }
        self.state.accumulated_cost = outcome.accumulated;
        let mut messages = Vec::with_capacity(outcome.results.len());
        for result in &outcome.results {
            let last = result.last();
            let text = last
                .response
                .as_ref()
                .map(|r| r.text.clone())
                .unwrap_or_default();
            let hint = last.response.as_ref().and_then(|r| r.correctness_hint);
            let message = serialize_tool_result(&last.record, &text, hint);
            self.state
                .delivered
                .insert(last.record.call_id.clone(), message.content.clone());
            let value = message.to_value();
            self.state.history.push(value.clone());
            messages.push(value);
        }
        messages
    }

    /// Final result; `None` while the episode is still running.
    pub fn result(&self) -> Option<EpisodeResult> {
        if self.is_running() {
            return None;
        }
        let s = &self.state;
        let success = match (s.status, &s.final_answer) {
            (EpisodeStatus::Failed, _) | (_, None) => false,
            (_, Some(answer)) => evaluate_success(answer, &self.task),
        };
        let cost = s
            .accumulated_cost
            .checked_add(s.router_cost)
            .unwrap_or(Money(u64::MAX));
        let normalized_cost = normalize_cost(cost, self.config.cost.per_turn_cap).unwrap_or(1.0);
        let outcome = Outcome {
            success,
            normalized_cost,
        };
        Some(EpisodeResult {
            episode_id: s.episode_id.clone(),
            task_id: s.task_id.clone(),
            status: s.status,
            success,
            final_answer: s.final_answer.clone(),
            cost,
            provider_cost: s.accumulated_cost,
            router_cost: s.router_cost,
            normalized_cost,
            reward: reward(outcome, self.config.reward),
            turns: s.turn_index,
            failure: s.failure.clone(),
            records: s.ledger.records().to_vec(),
        })
    }
}

/// Runs one episode to completion and hands the result to the policy's
/// feedback hook.
pub fn run_episode(
    task: &Task,
    policy: &mut dyn Policy,
    config: &Arc<EpisodeConfig>,
) -> EpisodeResult {
    let mut episode = Episode::new(task.clone(), config.clone());
    while episode.is_running() {
        let observation = episode.observation();
        match policy.decide(&observation) {
            Ok(action) => {
                episode.step(&action).expect("episode is running");
            }
            Err(e) => episode.fail(FailureReason::Transport {
                detail: e.to_string(),
            }),
        }
    }
    let result = episode.result().expect("episode finished");
    policy.feedback(&result);
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(verifier: Verifier, reference: &str) -> Task {
        Task {
            id: "t".into(),
            prompt: "q".into(),
            reference_answer: reference.into(),
            verifier,
            difficulty: Difficulty::default(),
        }
    }

    #[test]
    fn success_rules() {
        assert!(evaluate_success("42", &task(Verifier::ExactMatch, "42")));
        assert!(evaluate_success(" 42 ", &task(Verifier::ExactMatch, "42")));
        assert!(!evaluate_success("42.0", &task(Verifier::ExactMatch, "42")));
        assert!(evaluate_success(
            "0.30000000001",
            &task(Verifier::NumericMatch, "0.3")
        ));
        assert!(!evaluate_success(
            "0.31",
            &task(Verifier::NumericMatch, "0.3")
        ));
        assert!(!evaluate_success(
            "about three",
            &task(Verifier::NumericMatch, "3")
        ));
        assert!(evaluate_success(
            "The capital is  Paris,\nFrance.",
            &task(Verifier::Contains, "Paris, France")
        ));
        assert!(!evaluate_success(
            "paris",
            &task(Verifier::Contains, "Paris")
        ));
    }

    #[test]
    fn stratification() {
        let mk = |p: f64| Task {
            difficulty: Difficulty {
                pass_rate: p,
                tier: None,
            },
            ..task(Verifier::ExactMatch, "x")
        };
        let tiers: Vec<_> =
            stratify_tasks(&[mk(0.9), mk(0.5), mk(0.1), mk(0.7), mk(0.3)], (0.7, 0.3))
                .unwrap()
                .into_iter()
                .map(|t| t.difficulty.tier.unwrap())
                .collect();
        use DifficultyTier::*;
        assert_eq!(tiers, vec![Easy, Medium, Hard, Easy, Medium]);
        assert!(stratify_tasks(&[mk(0.5)], (0.3, 0.7)).is_err());
    }

    #[test]
    fn task_file_parsing() {
        let text = r#"{"id":"a","prompt":"1+1?","reference_answer":"2","verifier":"numeric_match","difficulty":{"pass_rate":0.9}}

{"id":"b","prompt":"Capital of France?","reference_answer":"Paris","verifier":"contains","difficulty":{"pass_rate":0.2,"tier":"hard"}}"#;
        let tasks = load_tasks_jsonl(text).unwrap();
        assert_eq!(tasks.len(), 2);
        assert_eq!(
            tasks[1].tier(StratifyThresholds::default()),
            DifficultyTier::Hard
        );
        assert_eq!(
            tasks[0].tier(StratifyThresholds::default()),
            DifficultyTier::Easy
        );
        assert_eq!(load_tasks_jsonl(&tasks_to_jsonl(&tasks)).unwrap(), tasks);

        let dup = format!(
            "{}\n{}",
            text.lines().next().unwrap(),
            text.lines().next().unwrap()
        );
        assert!(matches!(
            load_tasks_jsonl(&dup),
            Err(TaskError::DuplicateId(_))
        ));
        assert!(matches!(
            load_tasks_jsonl("{oops"),
            Err(TaskError::Parse { line: 1, .. })
        ));
        assert!(matches!(load_tasks_jsonl("\n"), Err(TaskError::Empty)));
    }

    #[test]
    fn episode_ids_are_stable() {
        assert_eq!(episode_id("t1", 7), episode_id("t1", 7));
        assert_ne!(episode_id("t1", 7), episode_id("t1", 8));
        assert!(episode_id("t1", 7).starts_with("ep-"));
    }
}
