//! Turn execution: concurrent fan-out, deadlines, debounced retries, the
//! pre-dispatch budget guard and ledger emission.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, DifficultyTier};
use crate::cost_ledger::{
    call_cost, failed_call_cost, CallOutcome, CallRecord, CostError, Money, TokenUsage,
};
use crate::providers::{
    normalize_query, ChatMessage, InvocationContext, Provider, ProviderError, ProviderRequest,
    ProviderResponse,
};
use crate::tool_protocol::{CallModel, DEFAULT_TEMPERATURE, DEFAULT_TOP_P};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeLimits {
    pub max_turns: u32,
    pub fan_out_cap: u32,
    pub retry_max: u32,
    pub retry_debounce_ms: u64,
    pub episode_budget: Money,
    pub call_deadline_ms: u64,
    pub max_output_tokens: Option<u64>,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        Self {
            max_turns: 3,
            fan_out_cap: 1,
            retry_max: 2,
            retry_debounce_ms: 250,
            episode_budget: Money(1_000_000_000),
            call_deadline_ms: 60_000,
            max_output_tokens: None,
        }
    }
}

impl EpisodeLimits {
    pub fn check(&self) -> Result<(), String> {
        if self.max_turns == 0 {
            return Err("max_turns must be at least 1".into());
        }
        if self.fan_out_cap == 0 {
            return Err("fan_out_cap must be at least 1".into());
        }
        if self.call_deadline_ms == 0 {
            return Err("call_deadline_ms must be positive".into());
        }
        Ok(())
    }
}

/// Millisecond clock used for retry spacing.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
    fn sleep_ms(&self, ms: u64);
}

#[derive(Debug)]
pub struct SystemClock {
    start: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            start: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    fn sleep_ms(&self, ms: u64) {
        std::thread::sleep(Duration::from_millis(ms));
    }
}

/// Clock whose sleeps advance time instantly; used for simulated runs.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: AtomicU64,
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn sleep_ms(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetryDecision {
    RetryAfter(u64),
    GiveUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryState {
    /// Retry index of the attempt that just finished.
    pub attempt: u32,
    pub last_attempt_end_ms: u64,
    pub accumulated: Money,
    /// Prompt-side cost of one more attempt.
    pub retry_worst_case: Money,
}

pub fn retry_policy(
    outcome: CallOutcome,
    state: &RetryState,
    limits: &EpisodeLimits,
    clock: &dyn Clock,
) -> RetryDecision {
    if outcome == CallOutcome::Ok || state.attempt >= limits.retry_max {
        return RetryDecision::GiveUp;
    }
    match state.accumulated.checked_add(state.retry_worst_case) {
        Ok(projected) if projected <= limits.episode_budget => {}
        _ => return RetryDecision::GiveUp,
    }
    let elapsed = clock.now_ms().saturating_sub(state.last_attempt_end_ms);
    RetryDecision::RetryAfter(limits.retry_debounce_ms.saturating_sub(elapsed))
}

/// Task facts the simulator needs for every call in an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub seed: u64,
    pub task_key: String,
    pub tier: DifficultyTier,
    pub reference_answer: String,
}

/// Everything `dispatch_turn` reads but does not own.
pub struct DispatchEnv<'a> {
    pub catalog: &'a Catalog,
    pub limits: &'a EpisodeLimits,
    pub provider: &'a dyn Provider,
    pub clock: &'a dyn Clock,
}

/// One attempted invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub record: CallRecord,
    pub response: Option<ProviderResponse>,
    pub error: Option<ProviderError>,
}

/// All attempts for one `call_model` entry, in retry order.
#[derive(Debug, Clone, PartialEq)]
pub struct CallResult {
    pub position: usize,
    pub attempts: Vec<Attempt>,
}

impl CallResult {
    pub fn last(&self) -> &Attempt {
        self.attempts
            .last()
            .expect("every call makes at least one attempt")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutcome {
    pub results: Vec<CallResult>,
    pub accumulated: Money,
}

impl TurnOutcome {
    pub fn records(&self) -> impl Iterator<Item = &CallRecord> {
        self.results
            .iter()
            .flat_map(|r| r.attempts.iter().map(|a| &a.record))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DispatchError {
    #[error(
        "episode budget {budget} reached: spent {accumulated}, next turn needs up to {projected}"
    )]
    BudgetExceeded {
        accumulated: Money,
        projected: Money,
        budget: Money,
    },
    #[error("model `{0}` is not in the catalog snapshot")]
    UnknownModel(String),
    #[error(transparent)]
    Cost(#[from] CostError),
}

pub fn call_id(episode_id: &str, turn_index: u32, position: usize, retry: u32) -> String {
    format!("{episode_id}-t{turn_index}-c{position}-r{retry}")
}

pub fn build_request(call: &CallModel, limits: &EpisodeLimits) -> ProviderRequest {
    let mut messages = Vec::with_capacity(2);
    if let Some(system) = &call.system_prompt_override {
        messages.push(ChatMessage::new("system", system.clone()));
    }
    messages.push(ChatMessage::new("user", call.payload.clone()));
    ProviderRequest {
        model_name: call.model_name.clone(),
        messages,
        temperature: call.temperature.unwrap_or(DEFAULT_TEMPERATURE),
        top_p: call.top_p.unwrap_or(DEFAULT_TOP_P),
        max_output_tokens: limits.max_output_tokens,
        deadline_ms: limits.call_deadline_ms,
    }
}

/// Failures where the request plausibly reached a paid backend.
fn billable(err: &ProviderError) -> bool {
    matches!(
        err,
        ProviderError::Timeout(_)
            | ProviderError::Status { .. }
            | ProviderError::MalformedBody(_)
            | ProviderError::Transport(_)
            | ProviderError::Injected
    )
}

/// Dispatches the validated `call_model` entries of one turn concurrently.
///
/// Results are ordered by call position regardless of completion order.
/// `attempt_counters` carries per-model attempt ordinals across turns so a
/// repeated call to the same model draws a fresh simulated outcome.
pub fn dispatch_turn(
    calls: &[CallModel],
    episode_id: &str,
    turn_index: u32,
    task: &TaskContext,
    accumulated: Money,
    attempt_counters: &mut BTreeMap<String, u64>,
    env: &DispatchEnv<'_>,
) -> Result<TurnOutcome, DispatchError> {
    let limits = env.limits;
    let mut plans = Vec::with_capacity(calls.len());
    let mut projected = Money::ZERO;
    for call in calls {
        let descriptor = env
            .catalog
            .get(&call.model_name)
            .ok_or_else(|| DispatchError::UnknownModel(call.model_name.clone()))?;
        let request = build_request(call, limits);
        let worst = call_cost(
            TokenUsage::new(request.prompt_tokens(), 0),
            descriptor.prices,
        )?;
        projected = projected.checked_add(worst)?;
        plans.push((descriptor, request, worst));
    }
    if accumulated >= limits.episode_budget
        || accumulated.checked_add(projected)? > limits.episode_budget
    {
        return Err(DispatchError::BudgetExceeded {
            accumulated,
            projected,
            budget: limits.episode_budget,
        });
    }

    let stride = limits.retry_max as u64 + 1;
    let mut seen: BTreeMap<&str, u64> = BTreeMap::new();
    let bases: Vec<u64> = calls
        .iter()
        .map(|c| {
            let k = seen.entry(c.model_name.as_str()).or_insert(0);
            let base = attempt_counters.get(&c.model_name).copied().unwrap_or(0) + *k * stride;
            *k += 1;
            base
        })
        .collect();
    for (model, n) in &seen {
        *attempt_counters.entry((*model).to_string()).or_insert(0) += n * stride;
    }

    let spent = Mutex::new(accumulated);
    let results: Vec<Result<CallResult, DispatchError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = plans
            .iter()
            .enumerate()
            .map(|(position, (descriptor, request, worst))| {
                let spent = &spent;
                let base = bases[position];
                scope.spawn(move || -> Result<CallResult, DispatchError> {
                    let digest = normalize_query(request);
                    let mut attempts = Vec::new();
                    let mut retry = 0u32;
                    loop {
                        let ctx = InvocationContext {
                            seed: task.seed,
                            task_key: task.task_key.clone(),
                            tier: task.tier,
                            reference_answer: task.reference_answer.clone(),
                            attempt: base + retry as u64,
                            retry,
                        };
                        let result = env.provider.invoke(request, descriptor, &ctx);
                        let (outcome, usage, cost, latency_ms, cached, response, error) =
                            match result {
                                Ok(inv) => {
                                    let cost = if inv.cached {
                                        Money::ZERO
                                    } else {
                                        call_cost(inv.response.usage, descriptor.prices)?
                                    };
                                    (
                                        CallOutcome::Ok,
                                        inv.response.usage,
                                        cost,
                                        inv.response.latency_ms,
                                        inv.cached,
                                        Some(inv.response),
                                        None,
                                    )
                                }
                                Err(e) => {
                                    let prompt = request.prompt_tokens();
                                    let cost = if billable(&e) {
                                        failed_call_cost(prompt, descriptor.prices)?
                                    } else {
                                        Money::ZERO
                                    };
                                    let latency = match e {
                                        ProviderError::Timeout(ms) => ms,
                                        _ => 0,
                                    };
                                    (
                                        e.outcome(),
                                        TokenUsage::new(prompt, 0),
                                        cost,
                                        latency,
                                        false,
                                        None,
                                        Some(e),
                                    )
                                }
                            };
                        let now_spent = {
                            let mut guard = spent.lock().expect("turn cost lock poisoned");
                            *guard = guard.checked_add(cost)?;
                            *guard
                        };
                        attempts.push(Attempt {
                            record: CallRecord {
                                call_id: call_id(episode_id, turn_index, position, retry),
                                episode_id: episode_id.to_string(),
                                turn_index,
                                model_name: descriptor.name.clone(),
                                request_digest: digest.clone(),
                                usage,
                                cost,
                                latency_ms,
                                cached,
                                outcome,
                                retry_count: retry,
                            },
                            response,
                            error,
                        });
                        let state = RetryState {
                            attempt: retry,
                            last_attempt_end_ms: env.clock.now_ms(),
                            accumulated: now_spent,
                            retry_worst_case: *worst,
                        };
                        match retry_policy(outcome, &state, limits, env.clock) {
                            RetryDecision::GiveUp => break,
                            RetryDecision::RetryAfter(ms) => {
                                env.clock.sleep_ms(ms);
                                retry += 1;
                            }
                        }
                    }
                    Ok(CallResult { position, attempts })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("dispatch worker panicked"))
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let accumulated = spent.into_inner().expect("turn cost lock poisoned");
    Ok(TurnOutcome {
        results,
        accumulated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retry_policy_examples() {
        let clock = VirtualClock::default();
        let limits = EpisodeLimits {
            retry_debounce_ms: 100,
            ..EpisodeLimits::default()
        };
        let state = |attempt| RetryState {
            attempt,
            last_attempt_end_ms: clock.now_ms(),
            accumulated: Money::ZERO,
            retry_worst_case: Money(10),
        };
        assert_eq!(
            retry_policy(CallOutcome::Ok, &state(0), &limits, &clock),
            RetryDecision::GiveUp
        );
        match retry_policy(CallOutcome::Timeout, &state(0), &limits, &clock) {
            RetryDecision::RetryAfter(ms) => assert!(ms >= 100),
            other => panic!("expected retry, got {other:?}"),
        }
        assert_eq!(
            retry_policy(CallOutcome::Timeout, &state(2), &limits, &clock),
            RetryDecision::GiveUp
        );
    }

    #[test]
    fn retry_gives_up_when_budget_would_break() {
        let clock = VirtualClock::default();
        let limits = EpisodeLimits {
            episode_budget: Money(100),
            ..EpisodeLimits::default()
        };
        let state = RetryState {
            attempt: 0,
            last_attempt_end_ms: 0,
            accumulated: Money(95),
            retry_worst_case: Money(10),
        };
        assert_eq!(
            retry_policy(CallOutcome::ProviderError, &state, &limits, &clock),
            RetryDecision::GiveUp
        );
    }

    #[test]
    fn debounce_counts_elapsed_time() {
        let clock = VirtualClock::default();
        clock.sleep_ms(40);
        let limits = EpisodeLimits {
            retry_debounce_ms: 100,
            ..EpisodeLimits::default()
        };
        let state = RetryState {
            attempt: 0,
            last_attempt_end_ms: 0,
            accumulated: Money::ZERO,
            retry_worst_case: Money::ZERO,
        };
        assert_eq!(
            retry_policy(CallOutcome::Timeout, &state, &limits, &clock),
            RetryDecision::RetryAfter(60)
        );
    }

    #[test]
    fn call_ids_are_positional() {
        assert_eq!(call_id("ep-1", 0, 2, 1), "ep-1-t0-c2-r1");
    }
}
