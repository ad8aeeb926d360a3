//! JSON and CSV report documents.

use serde::{Deserialize, Serialize};

use super::{EvalError, EvalReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!(
                "unknown report format `{other}` (expected json or csv)"
            )),
        }
    }
}

/// Pretty JSON with a trailing newline; field order follows the types.
pub fn export_json(report: &EvalReport) -> String {
    let mut out = serde_json::to_string_pretty(report).expect("report serializes");
    out.push('\n');
    out
}

pub fn import_json(text: &str) -> Result<EvalReport, EvalError> {
    serde_json::from_str(text).map_err(|e| EvalError::Export(e.to_string()))
}

/// A summary header and row, a blank line, then the per-task table.
pub fn export_csv(report: &EvalReport) -> Result<String, EvalError> {
    let err = |e: csv::Error| EvalError::Export(e.to_string());
    let a = &report.aggregates;
    let mut summary = csv::Writer::from_writer(Vec::new());
    summary
        .write_record([
            "policy",
            "seed",
            "tasks",
            "accuracy",
            "avg_cost_usd",
            "cost_utility",
            "avg_reward",
            "direct",
            "synthesized",
            "selected",
            "failed",
        ])
        .map_err(err)?;
    summary
        .write_record([
            report.meta.policy.clone(),
            report.meta.seed.to_string(),
            a.tasks.to_string(),
            a.accuracy.to_string(),
            a.avg_cost_usd.clone(),
            a.cost_utility.to_string(),
            a.avg_reward.to_string(),
            a.strategy_distribution.direct.to_string(),
            a.strategy_distribution.synthesized.to_string(),
            a.strategy_distribution.selected.to_string(),
            a.strategy_distribution.failed.to_string(),
        ])
        .map_err(err)?;

    let mut rows = csv::Writer::from_writer(Vec::new());
    rows.write_record([
        "task_id",
        "status",
        "success",
        "cost_usd",
        "reward",
        "turns",
        "calls",
        "cached_calls",
        "failure",
    ])
    .map_err(err)?;
    for r in &report.rows {
        rows.write_record([
            r.task_id.clone(),
            r.status.as_str().to_string(),
            r.success.to_string(),
            r.cost_usd.clone(),
            r.reward.to_string(),
            r.turns.to_string(),
            r.calls.to_string(),
            r.cached_calls.to_string(),
            r.failure.clone().unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    let into_string = |w: csv::Writer<Vec<u8>>| -> Result<String, EvalError> {
        let bytes = w
            .into_inner()
            .map_err(|e| EvalError::Export(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| EvalError::Export(e.to_string()))
    };
    Ok(format!("{}\n{}", into_string(summary)?, into_string(rows)?))
}

pub fn export_report(report: &EvalReport, format: ReportFormat) -> Result<String, EvalError> {
    match format {
        ReportFormat::Json => Ok(export_json(report)),
        ReportFormat::Csv => export_csv(report),
    }
}
