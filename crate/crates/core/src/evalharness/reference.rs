//! Published reference results shipped as a fixture for metric cross-checks.
//!
//! Cells are stored verbatim as strings. Most are fractions and USD costs;
//! some benchmarks use other score scales or report two values in one cell,
//! and those are left uninterpreted.

use serde::{Deserialize, Serialize};

const REFERENCE_JSON: &str = include_str!("../../fixtures/reference_results.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkCell {
    pub accuracy: String,
    pub avg_cost_usd: String,
}

impl BenchmarkCell {
    /// Accuracy as a number when the cell holds a single value.
    pub fn accuracy_value(&self) -> Option<f64> {
        self.accuracy.parse().ok()
    }

    pub fn cost_value(&self) -> Option<f64> {
        self.avg_cost_usd.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub model: String,
    pub group: String,
    pub results: std::collections::BTreeMap<String, BenchmarkCell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub id: String,
    pub benchmarks: Vec<String>,
    pub rows: Vec<ReferenceRow>,
}

impl ReferenceTable {
    pub fn cell(&self, model: &str, benchmark: &str) -> Option<&BenchmarkCell> {
        self.rows
            .iter()
            .find(|r| r.model == model)?
            .results
            .get(benchmark)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceResults {
    pub description: String,
    pub tables: Vec<ReferenceTable>,
}

impl ReferenceResults {
    pub fn table(&self, id: &str) -> Option<&ReferenceTable> {
        self.tables.iter().find(|t| t.id == id)
    }
}

pub fn reference_results() -> ReferenceResults {
    serde_json::from_str(REFERENCE_JSON).expect("bundled reference fixture parses")
}
