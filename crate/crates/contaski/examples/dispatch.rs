//! Runs the two-cluster dispatch example and prints the task allocation
//! timeline as seen in the trace.
//!
//!     cargo run --example dispatch

use contaski::metrics::compute_run_metrics;
use contaski::scenario::parse_scenario;
use contaski::trace::TraceBody;

fn main() -> anyhow::Result<()> {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/presets/fig3.json"
    ))?;
    let config = parse_scenario(&text)?;
    let result = contaski::run(&config)?;

    println!("allocation timeline:");
    for event in &result.trace {
        match &event.body {
            TraceBody::LeaderRegister { leader } => {
                println!("  {:>8.3}s  leader {} registered", event.t, leader.0);
            }
            TraceBody::TaskDispatch { task, leaders } => {
                let required: Vec<_> = task.required.iter().map(|c| c.0.as_str()).collect();
                println!(
                    "  {:>8.3}s  task {} dispatched to {:?}, requires {required:?}",
                    event.t,
                    task.id.0,
                    leaders.iter().map(|n| n.0).collect::<Vec<_>>()
                );
            }
            TraceBody::TaskAccept { leader, task_id, counted } => {
                println!(
                    "  {:>8.3}s  leader {} accepted task {}{}",
                    event.t,
                    leader.0,
                    task_id.0,
                    if *counted { "" } else { " (late, ignored)" }
                );
            }
            TraceBody::WindowClose { task_id, accepts, status, lat_ms } => {
                println!(
                    "  {:>8.3}s  window for task {} closed: {accepts} accepts, {status:?}, lat={lat_ms:?} ms",
                    event.t, task_id.0
                );
            }
            _ => {}
        }
    }

    let metrics = compute_run_metrics(&result);
    println!(
        "\nmetrics: nc={} nat={}/{}",
        metrics.nc, metrics.nat, metrics.total_dispatched
    );
    for d in &metrics.per_dispatch {
        println!(
            "  task {}: cpt={} cit={} lat={:?} ms",
            d.task_id.0, d.cpt, d.cit, d.lat_ms
        );
    }
    Ok(())
}
