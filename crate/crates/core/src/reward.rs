//! Success-gated, cost-penalized reward.
//!
//! `reward = success ? K - lambda * normalized_cost : 0`. The same function is
//! used at turn and episode granularity. Negative rewards (lambda > K near the
//! cap) are allowed and not floored.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("success bonus K must be positive and finite, got {0}")]
    InvalidBonus(f64),
    #[error("cost penalty lambda must be non-negative and finite, got {0}")]
    InvalidPenalty(f64),
    #[error("normalized cost {0} is outside [0, 1]")]
    CostOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    #[serde(rename = "k")]
    pub success_bonus: f64,
    #[serde(rename = "lambda")]
    pub cost_penalty: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            success_bonus: 1.0,
            cost_penalty: LambdaPreset::Lambda2.value(),
        }
    }
}

impl RewardParams {
    pub fn new(success_bonus: f64, cost_penalty: f64) -> Result<Self, RewardError> {
        if !(success_bonus.is_finite() && success_bonus > 0.0) {
            return Err(RewardError::InvalidBonus(success_bonus));
        }
        if !(cost_penalty.is_finite() && cost_penalty >= 0.0) {
            return Err(RewardError::InvalidPenalty(cost_penalty));
        }
        Ok(Self {
            success_bonus,
            cost_penalty,
        })
    }
}

/// Named penalty presets for the three router variants. The values are
/// configuration defaults, not published constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaPreset {
    Lambda1,
    Lambda2,
    Lambda3,
}

impl LambdaPreset {
    pub fn value(self) -> f64 {
        match self {
            LambdaPreset::Lambda1 => 0.25,
            LambdaPreset::Lambda2 => 0.5,
            LambdaPreset::Lambda3 => 1.0,
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        match label.to_ascii_lowercase().as_str() {
            "lambda1" | "l1" => Some(LambdaPreset::Lambda1),
            "lambda2" | "l2" => Some(LambdaPreset::Lambda2),
            "lambda3" | "l3" => Some(LambdaPreset::Lambda3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    pub normalized_cost: f64,
}

impl Outcome {
    pub fn new(success: bool, normalized_cost: f64) -> Result<Self, RewardError> {
        if !(0.0..=1.0).contains(&normalized_cost) {
            return Err(RewardError::CostOutOfRange(normalized_cost));
        }
        Ok(Self {
            success,
            normalized_cost,
        })
    }
}

pub fn reward(outcome: Outcome, params: RewardParams) -> f64 {
    if !outcome.success {
        return 0.0;
    }
    params.success_bonus - params.cost_penalty * outcome.normalized_cost
}

/// Expected reward when success is Bernoulli(`accuracy`) and independent of cost.
pub fn expected_reward(accuracy: f64, expected_normalized_cost: f64, params: RewardParams) -> f64 {
    accuracy * (params.success_bonus - params.cost_penalty * expected_normalized_cost)
}
