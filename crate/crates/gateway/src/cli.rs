//! Command-line driver: `serve`, `eval`, `report`, `perturb` and `gen-tasks`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use xrouter_core::catalog::{load_catalog_file, perturb_costs, to_catalog_toml};
use xrouter_core::episode::{tasks_to_jsonl, Difficulty, Task, Verifier};
use xrouter_core::evalharness::{
    export_report, import_json, pareto_frontier, run_eval, run_eval_parallel, EvalReport,
    ReportFormat,
};
use xrouter_core::policies::PolicySpec;

use crate::config::{PolicyChoice, RunConfig};
use crate::server::{serve_on, AppState};

#[derive(Debug, Parser)]
#[command(name = "xrouter", version, about = "Cost-aware LLM routing engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP gateway.
    Serve(ServeArgs),
    /// Run a policy over a task set and write a report.
    Eval(EvalArgs),
    /// Re-export one report, or compare several.
    Report(ReportArgs),
    /// Write a catalog with randomly scaled prices.
    Perturb(PerturbArgs),
    /// Write a synthetic arithmetic task set.
    GenTasks(GenTasksArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Run configuration; defaults to $XROUTER_CONFIG.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Port on the configured bind host.
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Policy short name, e.g. `single:gpt-5-mini`, `cascade:a,b`, `egreedy`.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// `lambda1`, `lambda2` or `lambda3`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_turns: Option<u32>,
    #[arg(long)]
    pub fan_out_cap: Option<u32>,
    #[arg(long)]
    pub retry_max: Option<u32>,
    #[arg(long)]
    pub episode_budget_usd: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// One or more JSON reports written by `eval`.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "json")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = -0.2, allow_negative_numbers = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pub hi: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenTasksArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve(a) => serve(a),
        Command::Eval(a) => {
            let format = a.format;
            let report = eval(&a)?;
            write_output(a.out.as_deref(), &export_report(&report, format)?)
        }
        Command::Report(a) => write_output(a.out.as_deref(), &report(&a)?),
        Command::Perturb(a) => perturb(&a),
        Command::GenTasks(a) => {
            write_output(a.out.as_deref(), &tasks_to_jsonl(&gen_tasks(a.n, a.seed)))
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Command-line paths are relative to the working directory.
fn from_cwd(p: &Path) -> anyhow::Result<PathBuf> {
    Ok(std::path::absolute(p)?)
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::discover(a.config.as_deref())?;
    let catalog = cfg.load_catalog()?;
    let tasks = cfg.load_tasks()?;
    let engine = Arc::new(cfg.episode_config(catalog)?);
    let mut bind = cfg.server.bind.clone();
    if let Some(port) = a.port {
        let host = bind
            .rsplit_once(':')
            .map(|(h, _)| h.to_string())
            .unwrap_or(bind.clone());
        bind = format!("{host}:{port}");
    }
    let state = Arc::new(AppState::new(
        engine,
        tasks,
        Duration::from_secs(cfg.server.idle_timeout_secs),
    ));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .with_context(|| format!("binding {bind}"))?;
        eprintln!("xrouter listening on {}", listener.local_addr()?);
        serve_on(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

/// Runs `eval` and returns the report. Learning and remote policies run in
/// task order on one instance; the rest run in parallel.
pub fn eval(a: &EvalArgs) -> anyhow::Result<EvalReport> {
    let mut cfg = RunConfig::discover(a.config.as_deref())?;
    if let Some(p) = &a.catalog {
        cfg.catalog = Some(from_cwd(p)?);
    }
    if let Some(p) = &a.tasks {
        cfg.tasks = Some(from_cwd(p)?);
    }
    if let Some(p) = &a.policy {
        cfg.policy = Some(PolicyChoice::Name(p.clone()));
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.preset.is_some() {
        cfg.reward.preset = a.preset.clone();
        cfg.reward.lambda = None;
    }
    if a.k.is_some() {
        cfg.reward.k = a.k;
    }
    if a.lambda.is_some() {
        cfg.reward.lambda = a.lambda;
    }
    let limits = &mut cfg.limits;
    limits.max_turns = a.max_turns.or(limits.max_turns);
    limits.fan_out_cap = a.fan_out_cap.or(limits.fan_out_cap);
    limits.retry_max = a.retry_max.or(limits.retry_max);
    if a.episode_budget_usd.is_some() {
        limits.episode_budget_usd = a.episode_budget_usd.clone();
    }

    let Some(spec) = cfg.policy_spec()? else {
        bail!("no policy given; pass --policy or set `policy` in the config");
    };
    if cfg.tasks.is_none() {
        bail!("no task set given; pass --tasks or set `tasks` in the config");
    }
    let tasks = cfg.load_tasks()?;
    let engine = Arc::new(cfg.episode_config(cfg.load_catalog()?)?);
    let name = spec.name();
    let mut policy = spec.build(&tasks, engine.seed, &engine.limits)?;
    let report = match spec {
        PolicySpec::Egreedy { .. } | PolicySpec::External { .. } => {
            run_eval(&tasks, policy.as_mut(), &engine, &name)?
        }
        _ => run_eval_parallel(
            &tasks,
            || {
                spec.build(&tasks, engine.seed, &engine.limits)
                    .expect("policy built once already")
            },
            &engine,
            &name,
        )?,
    };
    Ok(report)
}

/// One report re-exports as-is; several become a comparison table with
/// cost utility and frontier membership.
pub fn report(a: &ReportArgs) -> anyhow::Result<String> {
    let reports = a
        .inputs
        .iter()
        .map(|p| {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            import_json(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if let [single] = reports.as_slice() {
        return Ok(export_report(single, a.format)?);
    }
    let points: Vec<_> = reports.iter().map(EvalReport::pareto_point).collect();
    let frontier: Vec<String> = pareto_frontier(&points)
        .into_iter()
        .map(|p| p.label)
        .collect();
    let rows: Vec<_> = reports
        .iter()
        .map(|r| {
            let agg = &r.aggregates;
            (
                r.meta.policy.clone(),
                agg.accuracy,
                agg.avg_cost_usd.clone(),
                agg.cost_utility.to_string(),
                frontier.contains(&r.meta.policy),
            )
        })
        .collect();
    Ok(match a.format {
        ReportFormat::Json => {
            let runs: Vec<_> = rows
                .iter()
                .map(|(policy, acc, cost, util, on)| {
                    json!({"policy": policy, "accuracy": acc, "avg_cost_usd": cost, "cost_utility": util, "on_frontier": on})
                })
                .collect();
            let mut text =
                serde_json::to_string_pretty(&json!({"runs": runs, "frontier": frontier}))?;
            text.push('\n');
            text
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "policy",
                "accuracy",
                "avg_cost_usd",
                "cost_utility",
                "on_frontier",
            ])?;
            for (policy, acc, cost, util, on) in &rows {
                w.write_record([
                    policy.clone(),
                    acc.to_string(),
                    cost.clone(),
                    util.clone(),
                    on.to_string(),
                ])?;
            }
            String::from_utf8(w.into_inner()?)?
        }
    })
}

fn perturb(a: &PerturbArgs) -> anyhow::Result<()> {
    let catalog = load_catalog_file(&a.catalog)?;
    let perturbed = perturb_costs(&catalog, (a.lo, a.hi), a.seed)?;
    write_output(a.out.as_deref(), &to_catalog_toml(&perturbed))
}

/// Deterministic two-operand arithmetic questions with spread pass rates.
pub fn gen_tasks(n: usize, seed: u64) -> Vec<Task> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (a, b) = (rng.gen_range(2..1000u64), rng.gen_range(2..1000u64));
            let pass_rate = (rng.gen_range(0..=100u32) as f64) / 100.0;
            Task {
                id: format!("arith-{i:05}"),
                prompt: format!("What is {a} * {b}? Reply with the number only."),
                reference_answer: (a * b).to_string(),
                verifier: Verifier::ExactMatch,
                difficulty: Difficulty {
                    pass_rate,
                    tier: None,
                },
            }
        })
        .collect()
}
