//! Backend routing, the cache layer and fault injection.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{ModelDescriptor, ProviderKind};
use crate::digest::{hash64, unit_interval};

use super::{
    cache_get_or_invoke, invoke_live, invoke_simulated, normalize_query, CacheStore, Invocation,
    InvocationContext, LiveEndpoint, Provider, ProviderError, ProviderRequest, ProviderResponse,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Timeout,
    ProviderError,
}

/// Forces a fault on every attempt of `model` with the given retry index
/// (optionally only for one task).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedFault {
    pub model: String,
    #[serde(default)]
    pub task_key: Option<String>,
    pub retry: u32,
    pub kind: FaultKind,
}

/// Injected backend failures. Rate-based faults are drawn from the same
/// hash stream as simulated correctness, so runs stay reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultPlan {
    pub timeout_rate: f64,
    pub error_rate: f64,
    pub scripted: Vec<ScriptedFault>,
}

impl FaultPlan {
    pub fn is_empty(&self) -> bool {
        self.timeout_rate <= 0.0 && self.error_rate <= 0.0 && self.scripted.is_empty()
    }

    pub fn fault_for(&self, model: &str, ctx: &InvocationContext) -> Option<FaultKind> {
        let scripted = self.scripted.iter().find(|f| {
            f.model == model
                && f.retry == ctx.retry
                && f.task_key.as_deref().is_none_or(|t| t == ctx.task_key)
        });
        if let Some(f) = scripted {
            return Some(f.kind);
        }
        if self.timeout_rate <= 0.0 && self.error_rate <= 0.0 {
            return None;
        }
        let u = unit_interval(hash64(&[
            b"fault",
            &ctx.seed.to_be_bytes(),
            ctx.task_key.as_bytes(),
            model.as_bytes(),
            &ctx.attempt.to_be_bytes(),
        ]));
        if u < self.timeout_rate {
            Some(FaultKind::Timeout)
        } else if u < self.timeout_rate + self.error_rate {
            Some(FaultKind::ProviderError)
        } else {
            None
        }
    }
}

/// Routes by `provider_kind`: simulated and live models go through the
/// optional cache; `cached` models are served from the store only.
#[derive(Debug, Default)]
pub struct ProviderPool {
    endpoints: Vec<LiveEndpoint>,
    cache: Option<Arc<CacheStore>>,
    faults: FaultPlan,
    inner: AtomicU64,
}

impl ProviderPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_cache(mut self, store: Arc<CacheStore>) -> Self {
        self.cache = Some(store);
        self
    }

    pub fn with_endpoints(mut self, endpoints: Vec<LiveEndpoint>) -> Self {
        self.endpoints = endpoints;
        self
    }

    pub fn with_faults(mut self, faults: FaultPlan) -> Self {
        self.faults = faults;
        self
    }

    pub fn cache(&self) -> Option<&Arc<CacheStore>> {
        self.cache.as_ref()
    }

    fn backend(
        &self,
        req: &ProviderRequest,
        descriptor: &ModelDescriptor,
        ctx: &InvocationContext,
    ) -> Result<ProviderResponse, ProviderError> {
        self.inner.fetch_add(1, Ordering::SeqCst);
        match self.faults.fault_for(&descriptor.name, ctx) {
            Some(FaultKind::Timeout) => return Err(ProviderError::Timeout(req.deadline_ms)),
            Some(FaultKind::ProviderError) => return Err(ProviderError::Injected),
            None => {}
        }
        match descriptor.provider_kind {
            ProviderKind::Simulated => invoke_simulated(req, descriptor, ctx),
            ProviderKind::Live => {
                let endpoint = self
                    .endpoints
                    .iter()
                    .find(|e| e.serves(&descriptor.name))
                    .ok_or_else(|| {
                        ProviderError::NotConfigured(format!(
                            "no endpoint serves `{}`",
                            descriptor.name
                        ))
                    })?;
                invoke_live(req, endpoint)
            }
            ProviderKind::Cached => Err(ProviderError::CacheMiss(descriptor.name.clone())),
        }
    }
}

impl Provider for ProviderPool {
    fn invoke(
        &self,
        request: &ProviderRequest,
        descriptor: &ModelDescriptor,
        ctx: &InvocationContext,
    ) -> Result<Invocation, ProviderError> {
        request.check()?;
        if descriptor.provider_kind == ProviderKind::Cached {
            let store = self.cache.as_ref().ok_or_else(|| {
                ProviderError::NotConfigured("cached models need a cache store".into())
            })?;
            return store
                .get(&normalize_query(request))
                .map(|e| Invocation {
                    response: e.response,
                    cached: true,
                })
                .ok_or_else(|| ProviderError::CacheMiss(descriptor.name.clone()));
        }
        let (response, cached) = cache_get_or_invoke(request, self.cache.as_deref(), || {
            self.backend(request, descriptor, ctx)
        })?;
        Ok(Invocation { response, cached })
    }

    fn inner_invocations(&self) -> u64 {
        self.inner.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{
        CapabilityProfile, DifficultyTier, ModelTier, PriceSchedule, TierAccuracy,
    };
    use crate::providers::ChatMessage;

    fn model(kind: ProviderKind) -> ModelDescriptor {
        ModelDescriptor {
            name: "m".into(),
            provider_kind: kind,
            tier: ModelTier::Budget,
            description: String::new(),
            prices: PriceSchedule::new(1, 1, 0),
            max_context: 1000,
            capability: Some(CapabilityProfile {
                accuracy_by_tier: TierAccuracy::uniform(1.0),
                output_tokens_min: 1,
                output_tokens_max: 1,
                latency_ms_nominal: 1,
            }),
        }
    }

    fn req() -> ProviderRequest {
        ProviderRequest {
            model_name: "m".into(),
            messages: vec![ChatMessage::new("user", "q")],
            temperature: 1.0,
            top_p: 1.0,
            max_output_tokens: None,
            deadline_ms: 100,
        }
    }

    fn ctx(retry: u32) -> InvocationContext {
        InvocationContext {
            seed: 1,
            task_key: "t".into(),
            tier: DifficultyTier::Easy,
            reference_answer: "a".into(),
            attempt: retry as u64,
            retry,
        }
    }

    #[test]
    fn scripted_faults_hit_their_retry() {
        let pool = ProviderPool::new().with_faults(FaultPlan {
            scripted: vec![ScriptedFault {
                model: "m".into(),
                task_key: None,
                retry: 0,
                kind: FaultKind::Timeout,
            }],
            ..FaultPlan::default()
        });
        let m = model(ProviderKind::Simulated);
        assert_eq!(
            pool.invoke(&req(), &m, &ctx(0)),
            Err(ProviderError::Timeout(100))
        );
        assert!(pool.invoke(&req(), &m, &ctx(1)).is_ok());
        assert_eq!(pool.inner_invocations(), 2);
    }

    #[test]
    fn cached_kind_reads_store_only() {
        let store = Arc::new(CacheStore::in_memory());
        let pool = ProviderPool::new().with_cache(store.clone());
        let cached = model(ProviderKind::Cached);
        assert!(matches!(
            pool.invoke(&req(), &cached, &ctx(0)),
            Err(ProviderError::CacheMiss(_))
        ));
        // Warm the store through the simulated path, then read it back.
        let warm = pool
            .invoke(&req(), &model(ProviderKind::Simulated), &ctx(0))
            .unwrap();
        assert!(!warm.cached);
        let hit = pool.invoke(&req(), &cached, &ctx(0)).unwrap();
        assert!(hit.cached);
        assert_eq!(hit.response, warm.response);
        assert_eq!(pool.inner_invocations(), 1);
    }

    #[test]
    fn fault_rates_are_deterministic() {
        let plan = FaultPlan {
            timeout_rate: 0.3,
            error_rate: 0.2,
            scripted: vec![],
        };
        let n = 4000;
        let mut timeouts = 0;
        let mut errors = 0;
        for a in 0..n {
            let mut c = ctx(0);
            c.attempt = a;
            match plan.fault_for("m", &c) {
                Some(FaultKind::Timeout) => timeouts += 1,
                Some(FaultKind::ProviderError) => errors += 1,
                None => {}
            }
            assert_eq!(plan.fault_for("m", &c), plan.fault_for("m", &c));
        }
        assert!((timeouts as f64 / n as f64 - 0.3).abs() < 0.03);
        assert!((errors as f64 / n as f64 - 0.2).abs() < 0.03);
    }
}
