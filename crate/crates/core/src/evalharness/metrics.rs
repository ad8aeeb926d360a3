//! Cost utility, Pareto frontiers and outcome distributions.

use std::collections::BTreeMap;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::episode::{EpisodeResult, EpisodeStatus};

/// Accuracy per USD of average spend. Zero spend has no finite utility and
/// is reported as the `"inf"` marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostUtility {
    Finite(f64),
    Infinite,
}

impl CostUtility {
    pub fn finite(self) -> Option<f64> {
        match self {
            CostUtility::Finite(v) => Some(v),
            CostUtility::Infinite => None,
        }
    }
}

impl std::fmt::Display for CostUtility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CostUtility::Finite(v) => write!(f, "{v}"),
            CostUtility::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for CostUtility {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            CostUtility::Finite(v) => serializer.serialize_f64(*v),
            CostUtility::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for CostUtility {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = CostUtility;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<CostUtility, E> {
                Ok(CostUtility::Finite(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<CostUtility, E> {
                Ok(CostUtility::Finite(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<CostUtility, E> {
                Ok(CostUtility::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<CostUtility, E> {
                if v == "inf" {
                    Ok(CostUtility::Infinite)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        deserializer.deserialize_any(V)
    }
}

pub fn cost_utility(accuracy: f64, avg_cost_usd: f64) -> CostUtility {
    if avg_cost_usd > 0.0 {
        CostUtility::Finite(accuracy / avg_cost_usd)
    } else {
        CostUtility::Infinite
    }
}

/// Labels ordered by descending finite cost utility; infinite entries are
/// left out.
pub fn rank_by_cost_utility(entries: &[(String, CostUtility)]) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = entries
        .iter()
        .filter_map(|(label, u)| u.finite().map(|v| (label.clone(), v)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub label: String,
    pub accuracy: f64,
    pub avg_cost: f64,
}

impl ParetoPoint {
    pub fn new(label: impl Into<String>, accuracy: f64, avg_cost: f64) -> Self {
        Self {
            label: label.into(),
            accuracy,
            avg_cost,
        }
    }

    /// `self` is at least as good on both axes and strictly better on one.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.accuracy >= other.accuracy
            && self.avg_cost <= other.avg_cost
            && (self.accuracy > other.accuracy || self.avg_cost < other.avg_cost)
    }
}

/// Non-dominated points in input order. Exact duplicates are all kept since
/// neither strictly dominates the other.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .avg_cost
            .total_cmp(&points[b].avg_cost)
            .then_with(|| points[b].accuracy.total_cmp(&points[a].accuracy))
    });
    let mut keep = vec![false; points.len()];
    // Best accuracy among strictly cheaper points seen so far.
    let mut best_cheaper = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let cost = points[order[i]].avg_cost;
        let mut j = i;
        while j < order.len() && points[order[j]].avg_cost == cost {
            j += 1;
        }
        // Within a cost group the first entry has the highest accuracy.
        let group_max = points[order[i]].accuracy;
        if group_max > best_cheaper {
            for &k in &order[i..j] {
                if points[k].accuracy == group_max {
                    keep[k] = true;
                }
            }
            best_cheaper = group_max;
        }
        i = j;
    }
    points
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(p, _)| p.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategyDistribution {
    pub direct: f64,
    pub synthesized: f64,
    pub selected: f64,
    pub failed: f64,
}

/// Terminal-mode fractions and per-model call counts. Every record counts,
/// so retries and cache hits show up as separate calls.
pub fn distributions(results: &[EpisodeResult]) -> (StrategyDistribution, BTreeMap<String, u64>) {
    let mut counts = [0u64; 4];
    let mut offload = BTreeMap::new();
    for r in results {
        let slot = match r.status {
            EpisodeStatus::DoneDirect => 0,
            EpisodeStatus::DoneSynthesized => 1,
            EpisodeStatus::DoneSelected => 2,
            EpisodeStatus::Failed | EpisodeStatus::Running => 3,
        };
        counts[slot] += 1;
        for record in &r.records {
            *offload.entry(record.model_name.clone()).or_insert(0) += 1;
        }
    }
    let n = results.len().max(1) as f64;
    let strategy = StrategyDistribution {
        direct: counts[0] as f64 / n,
        synthesized: counts[1] as f64 / n,
        selected: counts[2] as f64 / n,
        failed: counts[3] as f64 / n,
    };
    (strategy, offload)
}
