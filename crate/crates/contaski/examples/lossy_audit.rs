//! Runs a lossy 30-node scenario, replays the protocol invariants over the
//! trace and prints drop statistics — a template for validating custom
//! channel settings.
//!
//!     cargo run --example lossy_audit

use std::collections::BTreeMap;

use contaski::scenario::parse_scenario;
use contaski::trace::{audit, DropReason, TraceBody};

fn main() -> anyhow::Result<()> {
    let scenario = serde_json::json!({
        "seed": 3,
        "area": { "width": 200.0, "height": 200.0 },
        "universe": [
            "temperature", "humidity", "presence", "light",
            "machine-status", "pressure", "reservoir-level"
        ],
        "nodes": {
            "count": 30,
            "capability_assignment": "random",
            "placement": "uniform-random",
            "min_capabilities": 2
        },
        "radio": { "range_m": 50.0, "delay_ms": 2.0, "loss_prob": 0.25 },
        "protocol": { "similarity_threshold": 0.65, "capability_rounds": 2 },
        "tasks": {
            "count": 3,
            "generator": {
                "base_required": ["temperature", "humidity"],
                "extra_pool": ["presence", "light"],
                "max_extra": 2,
                "duration_s": 60.0,
                "quorum": 2
            }
        },
        "horizon_s": 400.0
    });
    let config = parse_scenario(&scenario.to_string())?;
    let result = contaski::run(&config)?;

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for event in &result.trace {
        let key = match &event.body {
            TraceBody::Send { .. } => "send",
            TraceBody::Deliver { .. } => "deliver",
            TraceBody::Drop { reason: DropReason::Loss, .. } => "drop (loss)",
            TraceBody::Drop { reason: DropReason::OutOfRange, .. } => "drop (out of range)",
            _ => continue,
        };
        *counts.entry(key).or_default() += 1;
    }
    println!("channel statistics with loss_prob=0.25:");
    for (kind, n) in &counts {
        println!("  {kind:<20} {n}");
    }

    let violations = audit(&result.trace);
    println!(
        "\naudit over {} trace events: {} violations",
        result.trace.len(),
        violations.len()
    );
    for v in &violations {
        println!("  {v}");
    }
    Ok(())
}
