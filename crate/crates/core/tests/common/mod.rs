#![allow(dead_code)]

use std::sync::Arc;

use xrouter_core::catalog::{
    CapabilityProfile, Catalog, DifficultyTier, ModelDescriptor, ModelTier, PriceSchedule,
    ProviderKind, TierAccuracy,
};
use xrouter_core::episode::{Difficulty, EpisodeConfig, Task, Verifier};

/// Simulated model with uniform accuracy and fixed completion length.
pub fn sim_model(
    name: &str,
    accuracy: f64,
    prices: PriceSchedule,
    out_tokens: u64,
) -> ModelDescriptor {
    ModelDescriptor {
        name: name.into(),
        provider_kind: ProviderKind::Simulated,
        tier: ModelTier::Mid,
        description: format!("simulated {name}"),
        prices,
        max_context: 100_000,
        capability: Some(CapabilityProfile {
            accuracy_by_tier: TierAccuracy::uniform(accuracy),
            output_tokens_min: out_tokens,
            output_tokens_max: out_tokens,
            latency_ms_nominal: 100,
        }),
    }
}

/// Model whose every call costs exactly `overhead_nanos`.
pub fn flat_model(name: &str, accuracy: f64, overhead_nanos: u64) -> ModelDescriptor {
    sim_model(name, accuracy, PriceSchedule::new(0, 0, overhead_nanos), 10)
}

pub fn catalog(models: Vec<ModelDescriptor>) -> Catalog {
    Catalog::new(models, 0).expect("valid catalog")
}

pub fn config(models: Vec<ModelDescriptor>, seed: u64) -> Arc<EpisodeConfig> {
    Arc::new(EpisodeConfig::new(catalog(models), seed))
}

pub fn task(id: &str, prompt: &str, reference: &str) -> Task {
    Task {
        id: id.into(),
        prompt: prompt.into(),
        reference_answer: reference.into(),
        verifier: Verifier::ExactMatch,
        difficulty: Difficulty {
            pass_rate: 0.9,
            tier: Some(DifficultyTier::Easy),
        },
    }
}

pub fn tasks(n: usize) -> Vec<Task> {
    (0..n)
        .map(|i| {
            task(
                &format!("task-{i:05}"),
                &format!("Compute item number {i} of the series."),
                &format!("{}", i * 7),
            )
        })
        .collect()
}
