//! Runs the 4-node worked example and prints each node's view of the
//! cluster and the elected leader.
//!
//!     cargo run --example clustering

use contaski::scenario::parse_scenario;
use contaski::similarity::capability_similarity;

fn main() -> anyhow::Result<()> {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/presets/fig2.json"
    ))?;
    let config = parse_scenario(&text)?;
    let result = contaski::run(&config)?;

    println!("pairwise similarity:");
    let nodes: Vec<_> = result.nodes.values().collect();
    for (i, a) in nodes.iter().enumerate() {
        for b in nodes.iter().skip(i + 1) {
            let sim = capability_similarity(&a.capabilities, &b.capabilities)?;
            println!("  sim({}, {}) = {sim:.4}", a.id, b.id);
        }
    }

    println!("\nfinal state:");
    for node in result.nodes.values() {
        let caps: Vec<_> = node.capabilities.iter().map(|c| c.0.as_str()).collect();
        println!(
            "  node {} caps={caps:?} cluster={:?} leader={:?}",
            node.id,
            node.cluster.iter().map(|n| n.0).collect::<Vec<_>>(),
            node.leader.map(|n| n.0),
        );
    }
    println!(
        "\nAP registry: {:?}",
        result.ap.leaders.iter().map(|n| n.0).collect::<Vec<_>>()
    );
    Ok(())
}
