mod common;

use num_rational::Ratio;
use proptest::prelude::*;
use xrouter_core::cost_ledger::Money;
use xrouter_core::episode::{run_episode, EpisodeResult};
use xrouter_core::evalharness::{
    build_report, cost_utility, distributions, export_csv, export_json, import_json,
    pareto_frontier, rank_by_cost_utility, reference_results, run_eval, run_eval_parallel,
    CostUtility, EvalError, ParetoPoint, RunMeta,
};
use xrouter_core::policies::{
    answer_message, call_model_message, Direct, DirectSource, Policy, PolicyError, SingleModel,
};

use common::*;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    ((a - b) / b).abs() <= tol
}

#[test]
fn oracle_on_ten_tasks_is_perfect_and_free() {
    let cfg = config(vec![flat_model("m", 0.5, 1_000)], 1);
    let work = tasks(10);
    let answers = work
        .iter()
        .map(|t| (t.id.clone(), t.reference_answer.clone()))
        .collect();
    let report = run_eval(
        &work,
        &mut Direct::new(DirectSource::Oracle(answers)),
        &cfg,
        "oracle",
    )
    .unwrap();
    assert_eq!(report.aggregates.accuracy, 1.0);
    assert_eq!(report.aggregates.total_cost, Money::ZERO);
    assert_eq!(report.aggregates.avg_cost_nano, "0");
    assert_eq!(report.aggregates.cost_utility, CostUtility::Infinite);
    assert_eq!(report.aggregates.strategy_distribution.direct, 1.0);
}

#[test]
fn single_model_accuracy_matches_profile() {
    let cfg = config(vec![flat_model("m", 0.6, 1_000)], 17);
    let work = tasks(10_000);
    let report =
        run_eval_parallel(&work, || Box::new(SingleModel::new("m")), &cfg, "single:m").unwrap();
    assert!(
        (report.aggregates.accuracy - 0.6).abs() <= 0.02,
        "{}",
        report.aggregates.accuracy
    );
    assert_eq!(report.aggregates.offload_distribution["m"], 10_000);
}

#[test]
fn parallel_and_sequential_reports_agree() {
    let cfg = config(
        vec![flat_model("a", 0.4, 1_234), flat_model("b", 0.8, 98_765)],
        3,
    );
    let work = tasks(300);
    let seq = run_eval(&work, &mut SingleModel::new("b"), &cfg, "single:b").unwrap();
    let par =
        run_eval_parallel(&work, || Box::new(SingleModel::new("b")), &cfg, "single:b").unwrap();
    assert_eq!(export_json(&seq), export_json(&par));
}

#[test]
fn same_seed_gives_byte_identical_report() {
    let work = tasks(200);
    let run = || {
        let cfg = config(
            vec![flat_model("a", 0.4, 1_234), flat_model("b", 0.8, 98_765)],
            5,
        );
        export_json(
            &run_eval_parallel(&work, || Box::new(SingleModel::new("a")), &cfg, "single:a")
                .unwrap(),
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn json_roundtrip_and_csv_summary() {
    let cfg = config(vec![flat_model("a", 0.4, 1_234)], 5);
    let report = run_eval(&tasks(30), &mut SingleModel::new("a"), &cfg, "single:a").unwrap();
    assert_eq!(import_json(&export_json(&report)).unwrap(), report);

    let csv = export_csv(&report).unwrap();
    let mut blocks = csv.split("\n\n");
    let summary = blocks.next().unwrap();
    let mut reader = csv::Reader::from_reader(summary.as_bytes());
    let headers = reader.headers().unwrap().clone();
    for col in ["accuracy", "avg_cost_usd", "cost_utility"] {
        assert!(headers.iter().any(|h| h == col), "missing {col}");
    }
    let row = reader.records().next().unwrap().unwrap();
    let get = |name: &str| {
        row.get(headers.iter().position(|h| h == name).unwrap())
            .unwrap()
            .to_string()
    };
    assert_eq!(get("avg_cost_usd"), report.aggregates.avg_cost_usd);
    assert_eq!(
        get("accuracy").parse::<f64>().unwrap(),
        report.aggregates.accuracy
    );

    let table = blocks.next().unwrap();
    let rows = csv::Reader::from_reader(table.as_bytes()).records().count();
    assert_eq!(rows, 30);
}

#[test]
fn empty_task_list_is_rejected() {
    let cfg = config(vec![flat_model("a", 0.4, 1_234)], 5);
    assert!(matches!(
        run_eval(&[], &mut SingleModel::new("a"), &cfg, "x"),
        Err(EvalError::NoTasks)
    ));
}

#[test]
fn cost_utility_on_reference_pairs() {
    let refs = reference_results();
    let table = refs.table("single_models").unwrap();
    let cell = |model: &str| table.cell(model, "GPQADiamond").unwrap();
    let gpt5 = cell("GPT-5");
    assert_eq!(
        (gpt5.accuracy.as_str(), gpt5.avg_cost_usd.as_str()),
        ("0.8586", "0.033716")
    );
    let u = cost_utility(gpt5.accuracy_value().unwrap(), gpt5.cost_value().unwrap());
    assert!(rel_close(u.finite().unwrap(), 0.8586 / 0.033716, 1e-6));
    assert!((u.finite().unwrap() - 25.47).abs() < 0.005);

    let lam3 = cell("xRouter-7b-lambda3");
    assert_eq!(
        (lam3.accuracy.as_str(), lam3.avg_cost_usd.as_str()),
        ("0.6061", "0.001320")
    );
    let u = cost_utility(lam3.accuracy_value().unwrap(), lam3.cost_value().unwrap());
    assert!(rel_close(u.finite().unwrap(), 0.6061 / 0.001320, 1e-6));
    assert!((u.finite().unwrap() - 459.2).abs() < 0.05);

    assert_eq!(cost_utility(0.0, 0.2), CostUtility::Finite(0.0));
    let ranked = rank_by_cost_utility(&[
        ("a".into(), CostUtility::Finite(2.0)),
        ("inf".into(), CostUtility::Infinite),
        ("b".into(), CostUtility::Finite(5.0)),
    ]);
    assert_eq!(ranked, vec![("b".to_string(), 5.0), ("a".to_string(), 2.0)]);
}

#[test]
fn frontier_on_reference_subset() {
    let refs = reference_results();
    let table = refs.table("single_models").unwrap();
    let points: Vec<ParetoPoint> = ["GPT-5", "GPT-5-mini", "Deepseek-R1", "GPT-OSS-20B"]
        .iter()
        .map(|m| {
            let c = table.cell(m, "GPQADiamond").unwrap();
            ParetoPoint::new(*m, c.accuracy_value().unwrap(), c.cost_value().unwrap())
        })
        .collect();
    let labels: Vec<String> = pareto_frontier(&points)
        .into_iter()
        .map(|p| p.label)
        .collect();
    assert_eq!(labels, vec!["GPT-5", "GPT-5-mini", "GPT-OSS-20B"]);
    assert!(points[1].dominates(&points[2]));
}

#[test]
fn frontier_edge_cases() {
    let one = vec![ParetoPoint::new("x", 0.5, 1.0)];
    assert_eq!(pareto_frontier(&one), one);
    let dup = vec![
        ParetoPoint::new("x", 0.5, 1.0),
        ParetoPoint::new("y", 0.5, 1.0),
    ];
    assert_eq!(pareto_frontier(&dup), dup);
    assert!(pareto_frontier(&[]).is_empty());
}

#[test]
fn fixture_keeps_dual_values_verbatim() {
    let refs = reference_results();
    let table = refs.table("single_models").unwrap();
    let dual = table
        .rows
        .iter()
        .filter_map(|r| r.results.get("IFEval"))
        .find(|c| c.accuracy.contains('/'))
        .expect("a dual IFEval cell");
    assert_eq!(dual.accuracy_value(), None);
    assert!(refs
        .table("router_models")
        .is_some_and(|t| t.rows.len() == 10));
}

fn brute_force(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    points
        .iter()
        .filter(|p| !points.iter().any(|q| q.dominates(p)))
        .cloned()
        .collect()
}

fn point_strategy() -> impl Strategy<Value = Vec<ParetoPoint>> {
    // Coarse grids force plenty of ties on both axes.
    proptest::collection::vec((0u32..20, 0u32..20), 0..=200).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (a, c))| ParetoPoint::new(format!("p{i}"), a as f64 / 19.0, c as f64 * 0.01))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn frontier_matches_brute_force(points in point_strategy()) {
        prop_assert_eq!(pareto_frontier(&points), brute_force(&points));
    }
}

/// Mixes strategies by task index: direct, single call, call then synthesize.
struct Mixed {
    i: usize,
}

impl Policy for Mixed {
    fn name(&self) -> String {
        "mixed".into()
    }
    fn decide(
        &mut self,
        obs: &xrouter_core::episode::Observation,
    ) -> Result<serde_json::Value, PolicyError> {
        let called = !xrouter_core::policies::tool_results(obs).is_empty();
        Ok(match (self.i % 3, called) {
            (0, _) => answer_message("x"),
            (1, false) | (2, false) => call_model_message(
                if self.i.is_multiple_of(2) { "a" } else { "b" },
                &obs.prompt,
            ),
            (1, true) => {
                let last = xrouter_core::policies::tool_results(obs).pop().unwrap();
                xrouter_core::policies::select_message(&last.tool_call_id)
            }
            _ => answer_message("y"),
        })
    }
    fn feedback(&mut self, _: &EpisodeResult) {
        self.i += 1;
    }
}

#[test]
fn aggregates_are_exact_and_distributions_conserve() {
    let cfg = config(
        vec![
            flat_model("a", 0.5, 333_333),
            flat_model("b", 0.5, 1_000_001),
        ],
        9,
    );
    let work = tasks(97);
    let mut p = Mixed { i: 0 };
    let results: Vec<EpisodeResult> = work.iter().map(|t| run_episode(t, &mut p, &cfg)).collect();
    let total: u64 = results.iter().map(|r| r.cost.nanos()).sum();
    let records: u64 = results.iter().map(|r| r.records.len() as u64).sum();
    let report = build_report(RunMeta::new("mixed", &cfg), results.clone()).unwrap();
    let agg = &report.aggregates;

    assert_eq!(agg.total_cost, Money(total));
    let avg: Ratio<u128> = match agg.avg_cost_nano.split_once('/') {
        Some((n, d)) => Ratio::new(n.parse().unwrap(), d.parse().unwrap()),
        None => Ratio::from_integer(agg.avg_cost_nano.parse().unwrap()),
    };
    assert_eq!(
        avg * Ratio::from_integer(97u128),
        Ratio::from_integer(total as u128)
    );

    let s = agg.strategy_distribution;
    assert!((s.direct + s.synthesized + s.selected + s.failed - 1.0).abs() <= 1e-12);
    assert!(s.direct > 0.0 && s.synthesized > 0.0 && s.selected > 0.0);
    assert_eq!(agg.offload_distribution.values().sum::<u64>(), records);
    assert_eq!(distributions(&results).1, agg.offload_distribution);
    let row_total: u64 = report.rows.iter().map(|r| r.cost.nanos()).sum();
    assert_eq!(row_total, total);
    let sorted = report.rows.windows(2).all(|w| w[0].task_id < w[1].task_id);
    assert!(sorted);
}

#[test]
fn avg_cost_usd_is_truncated_decimal() {
    // Three tasks totalling 1 nano-USD: 1/3 nano = 0.000000000333333 USD.
    let cfg = config(vec![flat_model("a", 1.0, 1)], 9);
    let t = tasks(3);
    let mut results: Vec<EpisodeResult> = t
        .iter()
        .map(|t| run_episode(t, &mut SingleModel::new("a"), &cfg))
        .collect();
    results[1].cost = Money::ZERO;
    results[2].cost = Money::ZERO;
    let report = build_report(RunMeta::new("x", &cfg), results).unwrap();
    assert_eq!(report.aggregates.avg_cost_nano, "1/3");
    assert_eq!(report.aggregates.avg_cost_usd, "0.000000000333333");
}
