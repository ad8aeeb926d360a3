//! Model catalog: the pool of routable models, their prices and the
//! capability profiles that drive the simulated backend.
//!
//! A [`Catalog`] is an immutable snapshot. Perturbation and refresh return a
//! new snapshot with a strictly larger `version`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::cost_ledger::{format_scaled, parse_scaled_decimal, DecimalError};
use crate::digest::{hash64, unit_interval};

/// Default relative perturbation range, ±20%.
pub const DEFAULT_PERTURBATION: (f64, f64) = (-0.2, 0.2);

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog schema violation: {0}")]
    Schema(String),
    #[error("duplicate model name `{0}`")]
    DuplicateName(String),
    #[error("model `{model}`: {field} is negative")]
    NegativePrice { model: String, field: &'static str },
    #[error("model `{model}`: {field} = {value} is not representable in whole nano-USD")]
    UnrepresentablePrice {
        model: String,
        field: &'static str,
        value: String,
    },
    #[error("model `{model}`: {reason}")]
    InvalidModel { model: String, reason: String },
    #[error("catalog has no models")]
    Empty,
    #[error("masking would leave the model pool empty")]
    EmptyPool,
    #[error("mask names unknown model `{0}`")]
    UnknownMaskEntry(String),
    #[error("invalid perturbation range ({lo}, {hi}); need -1 < lo <= hi")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("reading catalog: {0}")]
    Io(#[from] std::io::Error),
}

/// Prices in integer nano-USD: per token for input/output, per call for overhead.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PriceSchedule {
    pub input_price: u64,
    pub output_price: u64,
    pub fixed_overhead: u64,
}

impl PriceSchedule {
    pub fn new(input_price: u64, output_price: u64, fixed_overhead: u64) -> Self {
        Self {
            input_price,
            output_price,
            fixed_overhead,
        }
    }

    /// Builds a schedule from USD-per-million-token decimals and a USD overhead.
    pub fn from_usd(
        in_per_mtok: &str,
        out_per_mtok: &str,
        overhead_usd: &str,
    ) -> Result<Self, DecimalError> {
        Ok(Self {
            input_price: parse_scaled_decimal(in_per_mtok, 3)?,
            output_price: parse_scaled_decimal(out_per_mtok, 3)?,
            fixed_overhead: parse_scaled_decimal(overhead_usd, 9)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Simulated,
    Cached,
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTier {
    Budget,
    Mid,
    Premium,
}

impl ModelTier {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelTier::Budget => "budget",
            ModelTier::Mid => "mid",
            ModelTier::Premium => "premium",
        }
    }
}

/// Task difficulty bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyTier {
    Easy,
    Medium,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierAccuracy {
    pub easy: f64,
    pub medium: f64,
    pub hard: f64,
}

impl TierAccuracy {
    pub fn uniform(p: f64) -> Self {
        Self {
            easy: p,
            medium: p,
            hard: p,
        }
    }

    pub fn get(&self, tier: DifficultyTier) -> f64 {
        match tier {
            DifficultyTier::Easy => self.easy,
            DifficultyTier::Medium => self.medium,
            DifficultyTier::Hard => self.hard,
        }
    }
}

/// Parameters of the simulated backend for one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapabilityProfile {
    pub accuracy_by_tier: TierAccuracy,
    pub output_tokens_min: u64,
    pub output_tokens_max: u64,
    pub latency_ms_nominal: u64,
}

impl CapabilityProfile {
    fn check(&self) -> Result<(), String> {
        for (tier, p) in [
            ("easy", self.accuracy_by_tier.easy),
            ("medium", self.accuracy_by_tier.medium),
            ("hard", self.accuracy_by_tier.hard),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("accuracy for {tier} = {p} is outside [0, 1]"));
            }
        }
        if self.output_tokens_min > self.output_tokens_max {
            return Err(format!(
                "out_tokens min {} exceeds max {}",
                self.output_tokens_min, self.output_tokens_max
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub provider_kind: ProviderKind,
    pub tier: ModelTier,
    pub description: String,
    pub prices: PriceSchedule,
    pub max_context: u64,
    pub capability: Option<CapabilityProfile>,
}

impl ModelDescriptor {
    fn check(&self) -> Result<(), CatalogError> {
        let invalid = |reason: String| CatalogError::InvalidModel {
            model: self.name.clone(),
            reason,
        };
        if self.name.trim().is_empty() {
            return Err(CatalogError::Schema("model name is empty".into()));
        }
        if self.max_context == 0 {
            return Err(invalid("max_context must be positive".into()));
        }
        match (&self.capability, self.provider_kind) {
            (None, ProviderKind::Simulated) => Err(invalid(
                "simulated models require a capability profile".into(),
            )),
            (Some(cap), _) => cap.check().map_err(invalid),
            (None, _) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub version: u64,
    pub models: Vec<ModelDescriptor>,
    pub rng_seed: u64,
    /// Names masked out of the current snapshot by the last refresh.
    #[serde(default)]
    pub hidden: BTreeSet<String>,
}

impl Catalog {
    /// Builds a version-1 catalog, enforcing every invariant.
    pub fn new(models: Vec<ModelDescriptor>, rng_seed: u64) -> Result<Self, CatalogError> {
        if models.is_empty() {
            return Err(CatalogError::Empty);
        }
        let mut names = BTreeSet::new();
        for m in &models {
            m.check()?;
            if !names.insert(m.name.as_str()) {
                return Err(CatalogError::DuplicateName(m.name.clone()));
            }
        }
        Ok(Self {
            version: 1,
            models,
            rng_seed,
            hidden: BTreeSet::new(),
        })
    }

    /// Visible models in catalog order.
    pub fn visible(&self) -> impl Iterator<Item = &ModelDescriptor> {
        self.models
            .iter()
            .filter(|m| !self.hidden.contains(&m.name))
    }

    pub fn visible_names(&self) -> Vec<String> {
        self.visible().map(|m| m.name.clone()).collect()
    }

    /// Looks up a visible model by name.
    pub fn get(&self, name: &str) -> Option<&ModelDescriptor> {
        self.visible().find(|m| m.name == name)
    }
}

// ---- catalog file schema -------------------------------------------------

/// A decimal captured as its textual representation so no float rounding
/// sneaks into price conversion.
#[derive(Debug, Clone, PartialEq)]
struct DecimalText(String);

impl<'de> Deserialize<'de> for DecimalText {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = DecimalText;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a decimal number or decimal string")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<DecimalText, E> {
                Ok(DecimalText(v.to_string()))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<DecimalText, E> {
                Ok(DecimalText(v.to_string()))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<DecimalText, E> {
                if !v.is_finite() {
                    return Err(E::custom("price must be finite"));
                }
                // `Display` for f64 prints the shortest round-tripping decimal
                // and never uses exponent notation.
                Ok(DecimalText(format!("{v}")))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<DecimalText, E> {
                Ok(DecimalText(v.to_string()))
            }
        }
        deserializer.deserialize_any(V)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AccuracyEntry {
    easy: f64,
    medium: f64,
    hard: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapabilityEntry {
    accuracy: AccuracyEntry,
    out_tokens: [u64; 2],
    latency_ms: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelEntry {
    name: String,
    provider_kind: ProviderKind,
    tier: ModelTier,
    description: String,
    price_in_usd_per_mtok: DecimalText,
    price_out_usd_per_mtok: DecimalText,
    overhead_usd: DecimalText,
    max_context: u64,
    capability: Option<CapabilityEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogDocument {
    #[serde(default)]
    seed: u64,
    models: Vec<ModelEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocumentFormat {
    Toml,
    Json,
}

impl DocumentFormat {
    /// JSON if the path ends in `.json` (or the text starts with `{`), else TOML.
    pub fn detect(path: Option<&Path>, text: &str) -> Self {
        let by_ext = path
            .and_then(|p| p.extension())
            .and_then(|e| e.to_str())
            .map(|e| e.eq_ignore_ascii_case("json"));
        match by_ext {
            Some(true) => DocumentFormat::Json,
            Some(false) => DocumentFormat::Toml,
            None if text.trim_start().starts_with('{') => DocumentFormat::Json,
            None => DocumentFormat::Toml,
        }
    }
}

fn convert_price(
    model: &str,
    field: &'static str,
    text: &DecimalText,
    places: u32,
) -> Result<u64, CatalogError> {
    parse_scaled_decimal(&text.0, places).map_err(|e| match e {
        DecimalError::Negative(_) => CatalogError::NegativePrice {
            model: model.to_string(),
            field,
        },
        DecimalError::Syntax(v) => {
            CatalogError::Schema(format!("model `{model}`: {field} = `{v}` is not a decimal"))
        }
        DecimalError::TooPrecise { value, .. } | DecimalError::TooLarge(value) => {
            CatalogError::UnrepresentablePrice {
                model: model.to_string(),
                field,
                value,
            }
        }
    })
}

/// Parses a catalog document (TOML or JSON, one schema) into a version-1 catalog.
pub fn load_catalog(source: &str, format: DocumentFormat) -> Result<Catalog, CatalogError> {
    let doc: CatalogDocument = match format {
        DocumentFormat::Json => {
            serde_json::from_str(source).map_err(|e| CatalogError::Schema(e.to_string()))?
        }
        DocumentFormat::Toml => {
            toml::from_str(source).map_err(|e| CatalogError::Schema(e.to_string()))?
        }
    };
    let mut models = Vec::with_capacity(doc.models.len());
    for entry in doc.models {
        let prices = PriceSchedule {
            input_price: convert_price(
                &entry.name,
                "price_in_usd_per_mtok",
                &entry.price_in_usd_per_mtok,
                3,
            )?,
            output_price: convert_price(
                &entry.name,
                "price_out_usd_per_mtok",
                &entry.price_out_usd_per_mtok,
                3,
            )?,
            fixed_overhead: convert_price(&entry.name, "overhead_usd", &entry.overhead_usd, 9)?,
        };
        let capability = entry.capability.map(|c| CapabilityProfile {
            accuracy_by_tier: TierAccuracy {
                easy: c.accuracy.easy,
                medium: c.accuracy.medium,
                hard: c.accuracy.hard,
            },
            output_tokens_min: c.out_tokens[0],
            output_tokens_max: c.out_tokens[1],
            latency_ms_nominal: c.latency_ms,
        });
        models.push(ModelDescriptor {
            name: entry.name,
            provider_kind: entry.provider_kind,
            tier: entry.tier,
            description: entry.description,
            prices,
            max_context: entry.max_context,
            capability,
        });
    }
    Catalog::new(models, doc.seed)
}

pub fn load_catalog_file(path: &Path) -> Result<Catalog, CatalogError> {
    let text = std::fs::read_to_string(path)?;
    load_catalog(&text, DocumentFormat::detect(Some(path), &text))
}

/// Serializes a catalog back into the file schema (TOML), prices in USD.
pub fn to_catalog_toml(catalog: &Catalog) -> String {
    let mut out = format!("seed = {}\n", catalog.rng_seed);
    for m in &catalog.models {
        out.push_str("\n[[models]]\n");
        let _ = writeln!(out, "name = {}", toml_str(&m.name));
        let _ = writeln!(out, "provider_kind = \"{}\"", kind_str(m.provider_kind));
        let _ = writeln!(out, "tier = \"{}\"", m.tier.as_str());
        let _ = writeln!(out, "description = {}", toml_str(&m.description));
        let _ = writeln!(
            out,
            "price_in_usd_per_mtok = \"{}\"",
            format_scaled(u128::from(m.prices.input_price), 3)
        );
        let _ = writeln!(
            out,
            "price_out_usd_per_mtok = \"{}\"",
            format_scaled(u128::from(m.prices.output_price), 3)
        );
        let _ = writeln!(
            out,
            "overhead_usd = \"{}\"",
            format_scaled(u128::from(m.prices.fixed_overhead), 9)
        );
        let _ = writeln!(out, "max_context = {}", m.max_context);
        if let Some(c) = &m.capability {
            let _ = writeln!(
                out,
                "capability = {{ accuracy = {{ easy = {:?}, medium = {:?}, hard = {:?} }}, out_tokens = [{}, {}], latency_ms = {} }}",
                c.accuracy_by_tier.easy,
                c.accuracy_by_tier.medium,
                c.accuracy_by_tier.hard,
                c.output_tokens_min,
                c.output_tokens_max,
                c.latency_ms_nominal
            );
        }
    }
    out
}

fn toml_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn kind_str(kind: ProviderKind) -> &'static str {
    match kind {
        ProviderKind::Simulated => "simulated",
        ProviderKind::Cached => "cached",
        ProviderKind::Live => "live",
    }
}

// ---- mutations ------------------------------------------------------------

fn scale_price(price: u64, factor: f64, lo: f64, hi: f64) -> u64 {
    let p = price as f64;
    let floor_lo = ((1.0 + lo) * p).floor();
    let ceil_hi = ((1.0 + hi) * p).ceil();
    // Half-up rounding, clamped so float noise can never escape the bounds.
    let rounded = (p * factor + 0.5).floor().clamp(floor_lo, ceil_hi);
    rounded as u64
}

fn perturb_factor(seed: u64, model: &str, tag: &str, lo: f64, hi: f64) -> f64 {
    let u = unit_interval(hash64(&[
        b"perturb",
        &seed.to_be_bytes(),
        model.as_bytes(),
        tag.as_bytes(),
    ]));
    (1.0 + lo) + u * (hi - lo)
}

/// Scales each price field by an independent deterministic factor in
/// `[1 + lo, 1 + hi]`, rounding half-up to whole nano-USD.
pub fn perturb_costs(
    catalog: &Catalog,
    rel_range: (f64, f64),
    seed: u64,
) -> Result<Catalog, CatalogError> {
    let (lo, hi) = rel_range;
    if !(lo > -1.0 && lo <= hi && hi.is_finite()) {
        return Err(CatalogError::InvalidRange { lo, hi });
    }
    let mut next = catalog.clone();
    for m in &mut next.models {
        let p = m.prices;
        m.prices = PriceSchedule {
            input_price: scale_price(
                p.input_price,
                perturb_factor(seed, &m.name, "input", lo, hi),
                lo,
                hi,
            ),
            output_price: scale_price(
                p.output_price,
                perturb_factor(seed, &m.name, "output", lo, hi),
                lo,
                hi,
            ),
            fixed_overhead: scale_price(
                p.fixed_overhead,
                perturb_factor(seed, &m.name, "overhead", lo, hi),
                lo,
                hi,
            ),
        };
    }
    next.version = catalog.version + 1;
    next.rng_seed = seed;
    Ok(next)
}

/// Reorders the models by a seed-determined permutation and masks `mask`
/// from the new snapshot (replacing any previous mask).
pub fn refresh_catalog(
    catalog: &Catalog,
    seed: u64,
    mask: &[String],
) -> Result<Catalog, CatalogError> {
    let known: BTreeSet<&str> = catalog.models.iter().map(|m| m.name.as_str()).collect();
    for name in mask {
        if !known.contains(name.as_str()) {
            return Err(CatalogError::UnknownMaskEntry(name.clone()));
        }
    }
    let hidden: BTreeSet<String> = mask.iter().cloned().collect();
    if hidden.len() == known.len() {
        return Err(CatalogError::EmptyPool);
    }
    let mut keyed: BTreeMap<(u64, String), ModelDescriptor> = BTreeMap::new();
    for m in &catalog.models {
        let key = hash64(&[b"refresh", &seed.to_be_bytes(), m.name.as_bytes()]);
        keyed.insert((key, m.name.clone()), m.clone());
    }
    Ok(Catalog {
        version: catalog.version + 1,
        models: keyed.into_values().collect(),
        rng_seed: seed,
        hidden,
    })
}

/// USD per million tokens for a nano-USD-per-token price, exact to 3 places.
pub fn usd_per_mtok(nanos_per_token: u64) -> String {
    format_scaled(u128::from(nanos_per_token), 3)
}

/// Stable text shown to routers: one line per visible model, catalog order.
/// The version is deliberately not rendered.
pub fn render_catalog_prompt(catalog: &Catalog) -> String {
    let mut out = String::from("Available models (prices in USD per million tokens):\n");
    for m in catalog.visible() {
        let _ = write!(
            out,
            "- {} [{}] input ${}/M, output ${}/M",
            m.name,
            m.tier.as_str(),
            usd_per_mtok(m.prices.input_price),
            usd_per_mtok(m.prices.output_price),
        );
        if m.prices.fixed_overhead > 0 {
            let _ = write!(
                out,
                ", overhead ${} per call",
                format_scaled(u128::from(m.prices.fixed_overhead), 9)
            );
        }
        let _ = writeln!(out, ", context {} tokens: {}", m.max_context, m.description);
    }
    out
}
