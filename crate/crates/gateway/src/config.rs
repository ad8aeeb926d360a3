//! Run configuration: one TOML file describing the catalog, tasks, limits,
//! reward, providers and server settings.
//!
//! Relative paths inside the file resolve against the file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;
use xrouter_core::catalog::{
    load_catalog_file, Catalog, CatalogError, PriceSchedule, ProviderKind,
};
use xrouter_core::cost_ledger::{CostConfig, Money};
use xrouter_core::episode::{load_tasks_file, EpisodeConfig, StratifyThresholds, Task, TaskError};
use xrouter_core::orchestrator::{Clock, EpisodeLimits, SystemClock, VirtualClock};
use xrouter_core::policies::PolicySpec;
use xrouter_core::providers::{CacheStore, FaultPlan, LiveEndpoint, ProviderError, ProviderPool};
use xrouter_core::reward::{LambdaPreset, RewardParams};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "XROUTER_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("catalog: {0}")]
    Catalog(#[from] CatalogError),
    #[error("tasks: {0}")]
    Tasks(#[from] TaskError),
    #[error("cache: {0}")]
    Cache(#[from] ProviderError),
}

/// A policy given either by short name (`"single:gpt-5-mini"`) or as a table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PolicyChoice {
    Name(String),
    Spec(PolicySpec),
}

impl PolicyChoice {
    pub fn resolve(&self) -> Result<PolicySpec, ConfigError> {
        match self {
            PolicyChoice::Name(n) => {
                PolicySpec::parse_name(n).map_err(|e| ConfigError::Invalid(e.to_string()))
            }
            PolicyChoice::Spec(s) => Ok(s.clone()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsSection {
    pub max_turns: Option<u32>,
    pub fan_out_cap: Option<u32>,
    pub retry_max: Option<u32>,
    pub retry_debounce_ms: Option<u64>,
    /// USD decimal string, e.g. `"1.00"`.
    pub episode_budget_usd: Option<String>,
    pub call_deadline_ms: Option<u64>,
    pub max_output_tokens: Option<u64>,
}

impl LimitsSection {
    pub fn apply(&self, base: EpisodeLimits) -> Result<EpisodeLimits, ConfigError> {
        let mut l = base;
        if let Some(v) = self.max_turns {
            l.max_turns = v;
        }
        if let Some(v) = self.fan_out_cap {
            l.fan_out_cap = v;
        }
        if let Some(v) = self.retry_max {
            l.retry_max = v;
        }
        if let Some(v) = self.retry_debounce_ms {
            l.retry_debounce_ms = v;
        }
        if let Some(v) = &self.episode_budget_usd {
            l.episode_budget = Money::from_usd_str(v)
                .map_err(|e| ConfigError::Invalid(format!("episode_budget_usd: {e}")))?;
        }
        if let Some(v) = self.call_deadline_ms {
            l.call_deadline_ms = v;
        }
        if self.max_output_tokens.is_some() {
            l.max_output_tokens = self.max_output_tokens;
        }
        l.check().map_err(ConfigError::Invalid)?;
        Ok(l)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub k: Option<f64>,
    pub lambda: Option<f64>,
    /// `lambda1`, `lambda2` or `lambda3`; an explicit `lambda` wins.
    pub preset: Option<String>,
}

impl RewardSection {
    pub fn resolve(&self) -> Result<RewardParams, ConfigError> {
        let base = RewardParams::default();
        let preset = match &self.preset {
            Some(p) => Some(
                LambdaPreset::parse(p)
                    .ok_or_else(|| ConfigError::Invalid(format!("unknown lambda preset `{p}`")))?
                    .value(),
            ),
            None => None,
        };
        let lambda = self.lambda.or(preset).unwrap_or(base.cost_penalty);
        RewardParams::new(self.k.unwrap_or(base.success_bonus), lambda)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSection {
    /// Normalization cap in USD, default `"0.10"`.
    pub per_turn_cap_usd: Option<String>,
    pub router_in_usd_per_mtok: Option<String>,
    pub router_out_usd_per_mtok: Option<String>,
}

impl CostSection {
    pub fn resolve(&self) -> Result<CostConfig, ConfigError> {
        let base = CostConfig::default();
        let cap = match &self.per_turn_cap_usd {
            Some(v) => Money::from_usd_str(v)
                .map_err(|e| ConfigError::Invalid(format!("per_turn_cap_usd: {e}")))?,
            None => base.per_turn_cap,
        };
        let prices = PriceSchedule::from_usd(
            self.router_in_usd_per_mtok.as_deref().unwrap_or("0"),
            self.router_out_usd_per_mtok.as_deref().unwrap_or("0"),
            "0",
        )
        .map_err(|e| ConfigError::Invalid(format!("router prices: {e}")))?;
        CostConfig::new(cap, prices).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub bind: String,
    pub idle_timeout_secs: u64,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            idle_timeout_secs: 600,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockChoice {
    /// Virtual unless the catalog has live models.
    #[default]
    Auto,
    Virtual,
    System,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub catalog: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub policy: Option<PolicyChoice>,
    pub limits: LimitsSection,
    pub reward: RewardSection,
    pub cost: CostSection,
    pub cache: Option<CacheSection>,
    pub endpoints: Vec<LiveEndpoint>,
    pub server: ServerSection,
    pub stratify: Option<StratifyThresholds>,
    pub faults: FaultPlan,
    pub clock: ClockChoice,
    /// Directory relative paths resolve against; set by the loader.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: base_dir.to_path_buf(),
            detail: e.to_string(),
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base).map_err(|e| match e {
            ConfigError::Parse { detail, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                detail,
            },
            other => other,
        })
    }

    /// Loads `explicit`, else the file named by `XROUTER_CONFIG`, else defaults.
    pub fn discover(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) => Self::load(Path::new(&p)),
                None => Ok(Self::default()),
            },
        }
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load_catalog(&self) -> Result<Catalog, ConfigError> {
        let path = self
            .catalog
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("no catalog configured".into()))?;
        Ok(load_catalog_file(&self.resolve_path(path))?)
    }

    /// Configured tasks, or none when the file is not set.
    pub fn load_tasks(&self) -> Result<Vec<Task>, ConfigError> {
        match &self.tasks {
            Some(p) => Ok(load_tasks_file(&self.resolve_path(p))?),
            None => Ok(Vec::new()),
        }
    }

    pub fn policy_spec(&self) -> Result<Option<PolicySpec>, ConfigError> {
        self.policy.as_ref().map(PolicyChoice::resolve).transpose()
    }

    /// Assembles the engine configuration around an already loaded catalog.
    pub fn episode_config(&self, catalog: Catalog) -> Result<EpisodeConfig, ConfigError> {
        let mut pool = ProviderPool::new()
            .with_endpoints(self.endpoints.clone())
            .with_faults(self.faults.clone());
        if let Some(cache) = &self.cache {
            pool = pool.with_cache(Arc::new(CacheStore::open(&self.resolve_path(&cache.path))?));
        }
        let has_live = catalog
            .models
            .iter()
            .any(|m| m.provider_kind == ProviderKind::Live);
        let clock: Arc<dyn Clock> = match (self.clock, has_live) {
            (ClockChoice::System, _) | (ClockChoice::Auto, true) => {
                Arc::new(SystemClock::default())
            }
            _ => Arc::new(VirtualClock::default()),
        };
        let thresholds = match self.stratify {
            Some(t) => StratifyThresholds::new(t.easy_min, t.hard_max)?,
            None => StratifyThresholds::default(),
        };
        Ok(EpisodeConfig {
            catalog: Arc::new(catalog),
            limits: self.limits.apply(EpisodeLimits::default())?,
            reward: self.reward.resolve()?,
            cost: self.cost.resolve()?,
            seed: self.seed,
            thresholds,
            provider: Arc::new(pool),
            clock,
        })
    }
}
