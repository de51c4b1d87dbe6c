use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use contaski::engine;
use contaski::experiment::{run_experiment, write_outputs, ExperimentPlan};
use contaski::metrics::{compute_run_metrics, write_metrics_csv};
use contaski::model::NodeId;
use contaski::scenario::{validate_scenario, ScenarioConfig};
use contaski::trace::{audit, from_jsonl, to_jsonl, Endpoint, TraceBody, TraceEvent};

#[derive(Parser)]
#[command(name = "contaski", version, about = "Similarity-based IIoT task allocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario and write trace + metrics.
    Run(RunArgs),
    /// Run an experiment plan: sweep points x replications.
    Experiment(ExperimentArgs),
    /// Inspect or audit a trace file.
    Trace(TraceArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "CONTASKI_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment plan (JSON).
    #[arg(long)]
    plan: PathBuf,
    /// Parallel replications.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory.
    #[arg(long, env = "CONTASKI_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    /// Trace file (line-delimited JSON).
    path: PathBuf,
    /// Only events of this kind.
    #[arg(long)]
    kind: Option<String>,
    /// Only events involving this node.
    #[arg(long)]
    node: Option<u64>,
    /// Only events at or after this time (seconds).
    #[arg(long)]
    from: Option<f64>,
    /// Only events at or before this time (seconds).
    #[arg(long)]
    to: Option<f64>,
    /// Replay protocol invariants over the trace and report violations.
    #[arg(long)]
    audit: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Trace(args) => cmd_trace(args),
    }
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut config: ScenarioConfig =
        serde_json::from_str(&text).map_err(|e| format!("invalid JSON in {}: {e}", path.display()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    validate_scenario(config).map_err(|errors| {
        let mut msg = format!("invalid scenario {}:\n", path.display());
        for e in errors {
            msg.push_str(&format!("  - {e}\n"));
        }
        msg
    })
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let config = match load_scenario(&args.config, args.seed) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(1);
        }
    };
    let result = match engine::run(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("run failed: {e}");
            return ExitCode::from(2);
        }
    };

    if let Err(e) = write_run_outputs(&result, &args.out) {
        eprintln!("cannot write outputs: {e}");
        return ExitCode::from(2);
    }
    let metrics = compute_run_metrics(&result);
    println!(
        "run complete: {} events, nc={}, nat={}/{}",
        result.trace.len(),
        metrics.nc,
        metrics.nat,
        metrics.total_dispatched
    );
    ExitCode::SUCCESS
}

fn write_run_outputs(result: &engine::RunResult, out: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("trace.jsonl"), to_jsonl(&result.trace))?;

    let metrics = compute_run_metrics(result);
    let json = serde_json::json!({
        "metrics": metrics,
        "dispatch_log": result.ap.dispatch_log,
        "leaders": result.ap.leaders,
    });
    std::fs::write(
        out.join("metrics.json"),
        serde_json::to_string_pretty(&json)? + "\n",
    )?;

    let mut csv_bytes = Vec::new();
    write_metrics_csv(&mut csv_bytes, std::slice::from_ref(&metrics))
        .map_err(std::io::Error::other)?;
    std::fs::write(out.join("metrics.csv"), csv_bytes)?;
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> ExitCode {
    let text = match std::fs::read_to_string(&args.plan) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read plan {}: {e}", args.plan.display());
            return ExitCode::from(1);
        }
    };
    let plan: ExperimentPlan = match serde_json::from_str(&text) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("invalid plan {}: {e}", args.plan.display());
            return ExitCode::from(1);
        }
    };
    let result = match run_experiment(&plan, args.jobs) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("experiment failed: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = write_outputs(&result, &args.out) {
        eprintln!("cannot write outputs: {e}");
        return ExitCode::from(2);
    }
    for point in &result.points {
        let nat = point
            .summary
            .metrics
            .iter()
            .find(|m| m.metric == "nat")
            .map(|m| format!("{:.2}", m.mean))
            .unwrap_or_default();
        println!("point {}: mean nat {nat}", point.label);
    }
    let failed = result.failed_replications();
    if failed > 0 {
        eprintln!("{failed} replication(s) failed");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}

fn involves(event: &TraceEvent, node: NodeId) -> bool {
    let ep = Endpoint::Node(node);
    if event.from == Some(ep) || event.to == Some(ep) {
        return true;
    }
    match &event.body {
        TraceBody::ClusterUpdate { node: n, .. }
        | TraceBody::LeaderElected { node: n, .. }
        | TraceBody::TaskStart { node: n, .. }
        | TraceBody::TaskComplete { node: n, .. } => *n == node,
        TraceBody::LeaderRegister { leader } | TraceBody::TaskAccept { leader, .. } => {
            *leader == node
        }
        TraceBody::TaskDispatch { leaders, .. } => leaders.contains(&node),
        _ => false,
    }
}

fn cmd_trace(args: TraceArgs) -> ExitCode {
    let text = match std::fs::read_to_string(&args.path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read trace {}: {e}", args.path.display());
            return ExitCode::from(1);
        }
    };
    let events = match from_jsonl(&text) {
        Ok(events) => events,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };

    if args.audit {
        let violations = audit(&events);
        if violations.is_empty() {
            println!("audit: {} events, 0 violations", events.len());
            return ExitCode::SUCCESS;
        }
        for v in &violations {
            println!("violation: {v}");
        }
        eprintln!("audit: {} violation(s)", violations.len());
        return ExitCode::from(2);
    }

    for event in &events {
        if let Some(kind) = &args.kind {
            if event.body.kind() != kind {
                continue;
            }
        }
        if let Some(node) = args.node {
            if !involves(event, NodeId(node)) {
                continue;
            }
        }
        if let Some(from) = args.from {
            if event.t < from {
                continue;
            }
        }
        if let Some(to) = args.to {
            if event.t > to {
                continue;
            }
        }
        let endpoints = match (event.from, event.to) {
            (Some(f), Some(t)) => format!(" {f}->{t}"),
            (Some(f), None) => format!(" {f}->*"),
            _ => String::new(),
        };
        let detail = serde_json::to_value(&event.body)
            .ok()
            .and_then(|v| v.get("detail").cloned())
            .map(|d| format!(" {d}"))
            .unwrap_or_default();
        println!("t={:<12.6} {:<16}{endpoints}{detail}", event.t, event.body.kind());
    }
    ExitCode::SUCCESS
}
