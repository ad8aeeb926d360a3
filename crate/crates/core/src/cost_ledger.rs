//! Exact cost accounting.
//!
//! All money is integer nano-USD (1 USD = 10^9 nano-USD). Costs are computed
//! per provider invocation ([`CallRecord`]) and summed exactly at turn and
//! episode granularity; nothing here touches floating point except
//! [`normalize_cost`], which produces the reward's unit-interval input.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::PriceSchedule;

pub const NANOS_PER_USD: u64 = 1_000_000_000;

/// Default per-turn normalization cap: $0.10.
pub const DEFAULT_PER_TURN_CAP: Money = Money(100_000_000);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CostError {
    #[error("cost arithmetic overflowed u64 nano-USD")]
    Overflow,
    #[error("normalization cap must be positive")]
    ZeroCap,
    #[error("records span multiple episodes: {0:?}")]
    MixedEpisodes(Vec<String>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecimalError {
    #[error("`{0}` is not a plain decimal number")]
    Syntax(String),
    #[error("`{0}` is negative")]
    Negative(String),
    #[error("`{value}` has more than {max_places} fractional digits")]
    TooPrecise { value: String, max_places: u32 },
    #[error("`{0}` is too large")]
    TooLarge(String),
}

/// Parses a non-negative decimal string and scales it by `10^places`,
/// failing if the result is not an integer.
///
/// `parse_scaled_decimal("1.25", 3) == Ok(1250)`.
pub fn parse_scaled_decimal(text: &str, places: u32) -> Result<u64, DecimalError> {
    let t = text.trim();
    let (negative, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    let digits_ok = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    if (int_part.is_empty() && frac_part.is_empty())
        || !digits_ok(int_part)
        || !digits_ok(frac_part)
    {
        return Err(DecimalError::Syntax(text.to_string()));
    }
    let frac_trimmed = frac_part.trim_end_matches('0');
    if frac_trimmed.len() > places as usize {
        return Err(DecimalError::TooPrecise {
            value: text.to_string(),
            max_places: places,
        });
    }
    let mut scaled: u128 = 0;
    for b in int_part.bytes().chain(frac_trimmed.bytes()) {
        scaled = scaled * 10 + u128::from(b - b'0');
        if scaled > u128::from(u64::MAX) * 10 {
            return Err(DecimalError::TooLarge(text.to_string()));
        }
    }
    for _ in frac_trimmed.len()..places as usize {
        scaled *= 10;
        if scaled > u128::from(u64::MAX) {
            return Err(DecimalError::TooLarge(text.to_string()));
        }
    }
    let value = u64::try_from(scaled).map_err(|_| DecimalError::TooLarge(text.to_string()))?;
    if negative && value != 0 {
        return Err(DecimalError::Negative(text.to_string()));
    }
    Ok(value)
}

/// Renders `value / 10^places` with exactly `places` fractional digits.
pub fn format_scaled(value: u128, places: u32) -> String {
    let scale = 10u128.pow(places);
    if places == 0 {
        return value.to_string();
    }
    format!(
        "{}.{:0width$}",
        value / scale,
        value % scale,
        width = places as usize
    )
}

/// Non-negative amount of money in nano-USD.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Money(pub u64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_nanos(nanos: u64) -> Self {
        Money(nanos)
    }

    pub fn nanos(self) -> u64 {
        self.0
    }

    /// Parses a USD decimal such as `"0.10"`; at most 9 fractional digits.
    pub fn from_usd_str(usd: &str) -> Result<Self, DecimalError> {
        parse_scaled_decimal(usd, 9).map(Money)
    }

    pub fn checked_add(self, other: Money) -> Result<Money, CostError> {
        self.0
            .checked_add(other.0)
            .map(Money)
            .ok_or(CostError::Overflow)
    }

    /// Human-readable USD with all nine fractional digits, e.g. `"0.006250000"`.
    pub fn usd_string(self) -> String {
        format_scaled(u128::from(self.0), 9)
    }

    pub fn as_usd_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_USD as f64
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}", self.usd_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            prompt_tokens,
            completion_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens.saturating_add(self.completion_tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOutcome {
    Ok,
    Timeout,
    ProviderError,
}

impl CallOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            CallOutcome::Ok => "ok",
            CallOutcome::Timeout => "timeout",
            CallOutcome::ProviderError => "provider_error",
        }
    }
}

/// Audit row for one provider invocation. Never mutated after emission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub call_id: String,
    pub episode_id: String,
    pub turn_index: u32,
    pub model_name: String,
    pub request_digest: String,
    pub usage: TokenUsage,
    pub cost: Money,
    pub latency_ms: u64,
    pub cached: bool,
    pub outcome: CallOutcome,
    pub retry_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostConfig {
    pub per_turn_cap: Money,
    /// Prices charged for the router's own generation. Zero by default.
    pub router_self_prices: PriceSchedule,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            per_turn_cap: DEFAULT_PER_TURN_CAP,
            router_self_prices: PriceSchedule::default(),
        }
    }
}

impl CostConfig {
    pub fn new(per_turn_cap: Money, router_self_prices: PriceSchedule) -> Result<Self, CostError> {
        if per_turn_cap.0 == 0 {
            return Err(CostError::ZeroCap);
        }
        Ok(Self {
            per_turn_cap,
            router_self_prices,
        })
    }
}

/// `prompt·input_price + completion·output_price + fixed_overhead`, exactly.
pub fn call_cost(usage: TokenUsage, prices: PriceSchedule) -> Result<Money, CostError> {
    let input = usage
        .prompt_tokens
        .checked_mul(prices.input_price)
        .ok_or(CostError::Overflow)?;
    let output = usage
        .completion_tokens
        .checked_mul(prices.output_price)
        .ok_or(CostError::Overflow)?;
    input
        .checked_add(output)
        .and_then(|s| s.checked_add(prices.fixed_overhead))
        .map(Money)
        .ok_or(CostError::Overflow)
}

/// Cost billed for a failed attempt: prompt tokens plus overhead, no completion.
pub fn failed_call_cost(prompt_tokens: u64, prices: PriceSchedule) -> Result<Money, CostError> {
    call_cost(TokenUsage::new(prompt_tokens, 0), prices)
}

/// `min(cost / cap, 1)`.
pub fn normalize_cost(cost: Money, cap: Money) -> Result<f64, CostError> {
    if cap.0 == 0 {
        return Err(CostError::ZeroCap);
    }
    if cost.0 >= cap.0 {
        return Ok(1.0);
    }
    Ok(cost.0 as f64 / cap.0 as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateLevel {
    Turn(u32),
    Episode,
}

pub fn aggregate(records: &[CallRecord], level: AggregateLevel) -> Result<Money, CostError> {
    let episodes: BTreeSet<&str> = records.iter().map(|r| r.episode_id.as_str()).collect();
    if episodes.len() > 1 {
        return Err(CostError::MixedEpisodes(
            episodes.into_iter().map(String::from).collect(),
        ));
    }
    records
        .iter()
        .filter(|r| match level {
            AggregateLevel::Turn(t) => r.turn_index == t,
            AggregateLevel::Episode => true,
        })
        .try_fold(Money::ZERO, |acc, r| acc.checked_add(r.cost))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditViolation {
    Mismatch { expected: Money, actual: Money },
    CachedNonzeroCost { call_id: String, cost: Money },
    DuplicateCallId { call_id: String },
    MixedEpisodes { episode_ids: Vec<String> },
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub violations: Vec<AuditViolation>,
}

impl AuditVerdict {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that `reported_episode_cost` equals the exact record sum and that
/// every record satisfies its own invariants.
pub fn audit_check(records: &[CallRecord], reported_episode_cost: Money) -> AuditVerdict {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    let episodes: BTreeSet<&str> = records.iter().map(|r| r.episode_id.as_str()).collect();
    if episodes.len() > 1 {
        violations.push(AuditViolation::MixedEpisodes {
            episode_ids: episodes.iter().map(|s| s.to_string()).collect(),
        });
    }
    for r in records {
        if r.cached && r.cost.0 != 0 {
            violations.push(AuditViolation::CachedNonzeroCost {
                call_id: r.call_id.clone(),
                cost: r.cost,
            });
        }
        if !seen.insert(r.call_id.as_str()) {
            violations.push(AuditViolation::DuplicateCallId {
                call_id: r.call_id.clone(),
            });
        }
    }
    match records
        .iter()
        .try_fold(Money::ZERO, |acc, r| acc.checked_add(r.cost))
    {
        Ok(sum) if sum != reported_episode_cost => violations.push(AuditViolation::Mismatch {
            expected: sum,
            actual: reported_episode_cost,
        }),
        Ok(_) => {}
        Err(_) => violations.push(AuditViolation::Overflow),
    }
    AuditVerdict { violations }
}

#[derive(Serialize)]
struct LedgerLine<'a> {
    #[serde(flatten)]
    record: &'a CallRecord,
    usd: String,
}

/// Append-only record sequence for one episode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ledger {
    records: Vec<CallRecord>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, record: CallRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[CallRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total(&self) -> Result<Money, CostError> {
        aggregate(&self.records, AggregateLevel::Episode)
    }

    pub fn to_jsonl(&self) -> String {
        export_jsonl(&self.records)
    }
}

/// One JSON object per line, record fields plus a derived `usd` string.
pub fn export_jsonl(records: &[CallRecord]) -> String {
    let mut out = String::new();
    for record in records {
        let line = LedgerLine {
            record,
            usd: record.cost.usd_string(),
        };
        out.push_str(&serde_json::to_string(&line).expect("ledger line serializes"));
        out.push('\n');
    }
    out
}
