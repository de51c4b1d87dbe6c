//! Runs a small similarity-threshold x loss sweep and prints the
//! per-point aggregates with 95% confidence intervals.
//!
//!     cargo run --example sweep

use contaski::experiment::{run_experiment, ExperimentPlan};

fn main() -> anyhow::Result<()> {
    let plan: ExperimentPlan = serde_json::from_value(serde_json::json!({
        "base": {
            "seed": 0,
            "area": { "width": 200.0, "height": 200.0 },
            "universe": [
                "temperature", "humidity", "presence", "light",
                "machine-status", "pressure", "reservoir-level"
            ],
            "nodes": {
                "count": 40,
                "capability_assignment": "random",
                "placement": "uniform-random",
                "min_capabilities": 3
            },
            "radio": { "range_m": 50.0, "delay_ms": 2.0, "loss_prob": 0.0 },
            "protocol": { "similarity_threshold": 0.65, "capability_rounds": 1 },
            "tasks": {
                "count": 5,
                "generator": {
                    "base_required": ["temperature", "humidity"],
                    "extra_pool": ["presence", "light", "pressure"],
                    "max_extra": 3,
                    "duration_s": 60.0,
                    "quorum": 1
                }
            },
            "horizon_s": 500.0
        },
        "sweep": {
            "threshold": [0.65, 0.8, 0.95],
            "loss_prob": [0.0, 0.2]
        },
        "replications": 10,
        "master_seed": 42
    }))?;

    let result = run_experiment(&plan, 4)?;
    println!(
        "{:<28} {:>12} {:>12} {:>14}",
        "point", "nc", "nat", "mean lat (ms)"
    );
    for point in &result.points {
        let fmt = |name: &str| {
            point
                .summary
                .metrics
                .iter()
                .find(|m| m.metric == name)
                .map(|m| match m.ci_half_width {
                    Some(hw) => format!("{:.1}±{:.1}", m.mean, hw),
                    None => format!("{:.1}", m.mean),
                })
                .unwrap_or_else(|| "-".to_string())
        };
        println!(
            "{:<28} {:>12} {:>12} {:>14}",
            point.label,
            fmt("nc"),
            fmt("nat"),
            fmt("lat_ms_mean"),
        );
    }
    Ok(())
}
