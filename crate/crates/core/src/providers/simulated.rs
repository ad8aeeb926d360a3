//! Deterministic stand-in backend driven by catalog capability profiles.

use crate::catalog::ModelDescriptor;
use crate::cost_ledger::TokenUsage;
use crate::digest::{hash64, unit_interval};

use super::{
    collapse_whitespace, InvocationContext, ProviderError, ProviderRequest, ProviderResponse,
};

/// Wrong answers the simulator hands out, picked by hash.
pub const DISTRACTORS: &[&str] = &[
    "I am not certain; my best guess is that no answer fits.",
    "The problem as stated has no solution.",
    "Unable to determine.",
    "The answer depends on assumptions not given.",
    "None of the above.",
];

fn draw(ctx: &InvocationContext, model: &str, label: &str) -> u64 {
    hash64(&[
        label.as_bytes(),
        &ctx.seed.to_be_bytes(),
        ctx.task_key.as_bytes(),
        model.as_bytes(),
        &ctx.attempt.to_be_bytes(),
    ])
}

fn distractor(ctx: &InvocationContext, model: &str) -> String {
    let reference = collapse_whitespace(&ctx.reference_answer);
    let start = draw(ctx, model, "distractor") as usize % DISTRACTORS.len();
    (0..DISTRACTORS.len())
        .map(|i| DISTRACTORS[(start + i) % DISTRACTORS.len()])
        .find(|d| reference.is_empty() || !d.contains(reference.as_str()))
        .unwrap_or("")
        .to_string()
}

/// Pure function of (seed, task, model, attempt, request); never sleeps.
pub fn invoke_simulated(
    req: &ProviderRequest,
    descriptor: &ModelDescriptor,
    ctx: &InvocationContext,
) -> Result<ProviderResponse, ProviderError> {
    req.check()?;
    let cap = descriptor
        .capability
        .as_ref()
        .ok_or_else(|| ProviderError::MissingCapability(descriptor.name.clone()))?;
    if cap.latency_ms_nominal > req.deadline_ms {
        return Err(ProviderError::Timeout(req.deadline_ms));
    }
    let p = cap.accuracy_by_tier.get(ctx.tier);
    let correct = unit_interval(draw(ctx, &descriptor.name, "correct")) < p;
    let text = if correct {
        ctx.reference_answer.trim().to_string()
    } else {
        distractor(ctx, &descriptor.name)
    };
    let span = cap.output_tokens_max - cap.output_tokens_min + 1;
    let mut completion = cap.output_tokens_min + draw(ctx, &descriptor.name, "tokens") % span;
    if let Some(limit) = req.max_output_tokens {
        completion = completion.min(limit);
    }
    Ok(ProviderResponse {
        text,
        usage: TokenUsage::new(req.prompt_tokens(), completion),
        latency_ms: cap.latency_ms_nominal,
        correctness_hint: Some(correct),
    })
}
