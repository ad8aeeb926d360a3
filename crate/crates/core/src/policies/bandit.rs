//! Epsilon-greedy over single-model strategies, learning from episode reward.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::episode::{EpisodeResult, ModelSummary, Observation};

use super::{call_model_message, select_message, tool_results, Policy, PolicyError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonSchedule {
    Constant {
        epsilon: f64,
    },
    /// `max(floor, 1 / sqrt(t))` for episode number `t >= 1`.
    InvSqrt {
        floor: f64,
    },
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule::InvSqrt { floor: 0.01 }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, t: u64) -> f64 {
        match *self {
            EpsilonSchedule::Constant { epsilon } => epsilon,
            EpsilonSchedule::InvSqrt { floor } => floor.max(1.0 / (t.max(1) as f64).sqrt()),
        }
    }

    fn check(&self) -> Result<(), PolicyError> {
        let v = match *self {
            EpsilonSchedule::Constant { epsilon } => epsilon,
            EpsilonSchedule::InvSqrt { floor } => floor,
        };
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(PolicyError::Config(format!(
                "epsilon {v} is outside [0, 1]"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub pulls: u64,
    pub reward_sum: f64,
}

impl ArmStats {
    pub fn mean(&self) -> f64 {
        if self.pulls == 0 {
            0.0
        } else {
            self.reward_sum / self.pulls as f64
        }
    }
}

/// Arms are catalog models played as "call, then select". Unplayed arms are
/// tried first; afterwards each episode explores uniformly with probability
/// `epsilon(t)` and otherwise exploits the best empirical mean, breaking
/// ties by lower nominal cost, then name.
#[derive(Debug, Clone)]
pub struct EpsilonGreedy {
    schedule: EpsilonSchedule,
    rng: ChaCha8Rng,
    arms: Vec<String>,
    stats: BTreeMap<String, ArmStats>,
    episodes: u64,
    current: Option<String>,
    history: Vec<String>,
}

impl EpsilonGreedy {
    /// `arms` restricts play to those models; empty means every visible model.
    pub fn new(
        schedule: EpsilonSchedule,
        seed: u64,
        arms: Vec<String>,
    ) -> Result<Self, PolicyError> {
        schedule.check()?;
        Ok(Self {
            schedule,
            rng: ChaCha8Rng::seed_from_u64(seed),
            arms,
            stats: BTreeMap::new(),
            episodes: 0,
            current: None,
            history: Vec::new(),
        })
    }

    pub fn stats(&self) -> &BTreeMap<String, ArmStats> {
        &self.stats
    }

    /// Arm chosen in each episode so far.
    pub fn history(&self) -> &[String] {
        &self.history
    }

    fn choose(&mut self, models: &[ModelSummary]) -> Result<String, PolicyError> {
        let mut candidates: Vec<&ModelSummary> = models
            .iter()
            .filter(|m| self.arms.is_empty() || self.arms.contains(&m.name))
            .collect();
        if candidates.is_empty() {
            return Err(PolicyError::Config(
                "no bandit arm is in the catalog".into(),
            ));
        }
        candidates.sort_by(|a, b| {
            a.nominal_cost_nano
                .cmp(&b.nominal_cost_nano)
                .then_with(|| a.name.cmp(&b.name))
        });
        if let Some(unplayed) = candidates
            .iter()
            .find(|m| self.stats.get(&m.name).is_none_or(|s| s.pulls == 0))
        {
            return Ok(unplayed.name.clone());
        }
        let epsilon = self.schedule.value(self.episodes + 1);
        if self.rng.gen::<f64>() < epsilon {
            let i = self.rng.gen_range(0..candidates.len());
            return Ok(candidates[i].name.clone());
        }
        let mut best = candidates[0];
        for m in &candidates[1..] {
            // Candidates are already in tie-break order, so only a strictly
            // larger mean displaces the incumbent.
            if self.stats[&m.name].mean() > self.stats[&best.name].mean() {
                best = m;
            }
        }
        Ok(best.name.clone())
    }
}

impl Policy for EpsilonGreedy {
    fn name(&self) -> String {
        "egreedy".into()
    }

    fn decide(&mut self, observation: &Observation) -> Result<Value, PolicyError> {
        if let Some(last) = tool_results(observation).last() {
            return Ok(select_message(&last.tool_call_id));
        }
        let arm = self.choose(&observation.models)?;
        self.current = Some(arm.clone());
        Ok(call_model_message(&arm, &observation.prompt))
    }

    fn feedback(&mut self, result: &EpisodeResult) {
        self.episodes += 1;
        if let Some(arm) = self.current.take() {
            let s = self.stats.entry(arm.clone()).or_default();
            s.pulls += 1;
            s.reward_sum += result.reward;
            self.history.push(arm);
        }
    }
}
