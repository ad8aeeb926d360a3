//! Batch evaluation and reporting.

mod export;
mod metrics;
mod reference;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost_ledger::{format_scaled, Money};
use crate::episode::{
    run_episode, EpisodeConfig, EpisodeResult, EpisodeStatus, FailureReason, Task,
};
use crate::policies::Policy;

pub use export::{export_csv, export_json, export_report, import_json, ReportFormat};
pub use metrics::{
    cost_utility, distributions, pareto_frontier, rank_by_cost_utility, CostUtility, ParetoPoint,
    StrategyDistribution,
};
pub use reference::{
    reference_results, BenchmarkCell, ReferenceResults, ReferenceRow, ReferenceTable,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation needs at least one task")]
    NoTasks,
    #[error("cost total overflowed")]
    Overflow,
    #[error("report export: {0}")]
    Export(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub policy: String,
    pub k: f64,
    pub lambda: f64,
    pub seed: u64,
    pub catalog_version: u64,
    pub per_turn_cap_usd: String,
    pub max_turns: u32,
    pub fan_out_cap: u32,
}

impl RunMeta {
    pub fn new(policy: impl Into<String>, config: &EpisodeConfig) -> Self {
        Self {
            policy: policy.into(),
            k: config.reward.success_bonus,
            lambda: config.reward.cost_penalty,
            seed: config.seed,
            catalog_version: config.catalog.version,
            per_turn_cap_usd: config.cost.per_turn_cap.usd_string(),
            max_turns: config.limits.max_turns,
            fan_out_cap: config.limits.fan_out_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task_id: String,
    pub status: EpisodeStatus,
    pub success: bool,
    pub cost: Money,
    pub cost_usd: String,
    pub reward: f64,
    pub turns: u32,
    pub calls: u32,
    pub cached_calls: u32,
    /// Failure kind for failed episodes.
    pub failure: Option<String>,
}

fn failure_kind(reason: &FailureReason) -> &'static str {
    match reason {
        FailureReason::Protocol { .. } => "protocol",
        FailureReason::Validation { .. } => "validation",
        FailureReason::TurnsExhausted { .. } => "turns_exhausted",
        FailureReason::BudgetExceeded { .. } => "budget_exceeded",
        FailureReason::Transport { .. } => "transport",
        FailureReason::Internal { .. } => "internal",
    }
}

impl TaskRow {
    pub fn from_result(r: &EpisodeResult) -> Self {
        Self {
            task_id: r.task_id.clone(),
            status: r.status,
            success: r.success,
            cost: r.cost,
            cost_usd: r.cost.usd_string(),
            reward: r.reward,
            turns: r.turns,
            calls: r.records.len() as u32,
            cached_calls: r.records.iter().filter(|c| c.cached).count() as u32,
            failure: r.failure.as_ref().map(|f| failure_kind(f).to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub tasks: u64,
    pub successes: u64,
    pub accuracy: f64,
    pub total_cost: Money,
    /// Exact mean in nano-USD as a reduced fraction `"n/d"` (or `"n"`).
    pub avg_cost_nano: String,
    /// Mean cost in USD, truncated to 15 decimal places.
    pub avg_cost_usd: String,
    pub avg_reward: f64,
    pub cost_utility: CostUtility,
    pub strategy_distribution: StrategyDistribution,
    pub offload_distribution: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: RunMeta,
    pub rows: Vec<TaskRow>,
    pub aggregates: Aggregates,
}

impl EvalReport {
    pub fn pareto_point(&self) -> ParetoPoint {
        ParetoPoint::new(
            self.meta.policy.clone(),
            self.aggregates.accuracy,
            avg_cost_usd_f64(&self.aggregates),
        )
    }
}

fn ratio_string(r: &Ratio<u128>) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn avg_cost_usd_f64(a: &Aggregates) -> f64 {
    if a.tasks == 0 {
        0.0
    } else {
        a.total_cost.nanos() as f64 / a.tasks as f64 / 1e9
    }
}

/// Folds episode results into a report; rows come out sorted by task id.
pub fn build_report(
    meta: RunMeta,
    mut results: Vec<EpisodeResult>,
) -> Result<EvalReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::NoTasks);
    }
    results.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let n = results.len() as u64;
    let mut total = Money::ZERO;
    for r in &results {
        total = total.checked_add(r.cost).map_err(|_| EvalError::Overflow)?;
    }
    let successes = results.iter().filter(|r| r.success).count() as u64;
    let accuracy = successes as f64 / n as f64;
    let avg = Ratio::new(u128::from(total.nanos()), u128::from(n));
    // USD with 15 places = nano-USD scaled by 10^6, truncated.
    let scaled = (Ratio::from_integer(1_000_000u128) * avg).to_integer();
    let avg_reward = results.iter().map(|r| r.reward).sum::<f64>() / n as f64;
    let (strategy_distribution, offload_distribution) = distributions(&results);
    let mut aggregates = Aggregates {
        tasks: n,
        successes,
        accuracy,
        total_cost: total,
        avg_cost_nano: ratio_string(&avg),
        avg_cost_usd: format_scaled(scaled, 15),
        avg_reward,
        cost_utility: CostUtility::Infinite,
        strategy_distribution,
        offload_distribution,
    };
    aggregates.cost_utility = cost_utility(accuracy, avg_cost_usd_f64(&aggregates));
    Ok(EvalReport {
        rows: results.iter().map(TaskRow::from_result).collect(),
        meta,
        aggregates,
    })
}

/// Runs one episode per task in task order with a single policy instance,
/// so learning policies see every episode.
pub fn run_episodes(
    tasks: &[Task],
    policy: &mut dyn Policy,
    config: &Arc<EpisodeConfig>,
) -> Vec<EpisodeResult> {
    tasks
        .iter()
        .map(|t| run_episode(t, policy, config))
        .collect()
}

pub fn run_eval(
    tasks: &[Task],
    policy: &mut dyn Policy,
    config: &Arc<EpisodeConfig>,
    policy_name: &str,
) -> Result<EvalReport, EvalError> {
    if tasks.is_empty() {
        return Err(EvalError::NoTasks);
    }
    build_report(
        RunMeta::new(policy_name, config),
        run_episodes(tasks, policy, config),
    )
}

/// Parallel variant for stateless policies: each episode gets a fresh
/// policy from `make_policy`. Produces the same report as [`run_eval`] for
/// such policies.
pub fn run_eval_parallel<F>(
    tasks: &[Task],
    make_policy: F,
    config: &Arc<EpisodeConfig>,
    policy_name: &str,
) -> Result<EvalReport, EvalError>
where
    F: Fn() -> Box<dyn Policy> + Sync,
{
    if tasks.is_empty() {
        return Err(EvalError::NoTasks);
    }
    let results: Vec<EpisodeResult> = tasks
        .par_iter()
        .map(|t| {
            let mut policy = make_policy();
            run_episode(t, policy.as_mut(), config)
        })
        .collect();
    build_report(RunMeta::new(policy_name, config), results)
}
