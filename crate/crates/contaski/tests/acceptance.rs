//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL line (visible with `cargo test --test acceptance -- --nocapture`).

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand::rngs::StdRng;

use contaski::experiment::{nat_samples, run_experiment, summary_csv, ExperimentPlan, ExperimentResult};
use contaski::metrics::compute_run_metrics;
use contaski::model::{CapabilitySet, NodeId, TaskStatus};
use contaski::scenario::parse_scenario;
use contaski::similarity::capability_similarity;
use contaski::trace::{audit, to_jsonl, TraceBody};
use contaski::{run, ScenarioConfig};

fn preset_path(name: &str) -> String {
    format!("{}/presets/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn load_scenario(name: &str) -> ScenarioConfig {
    let text = std::fs::read_to_string(preset_path(name)).expect("preset readable");
    parse_scenario(&text).expect("preset valid")
}

fn load_plan() -> ExperimentPlan {
    let text = std::fs::read_to_string(preset_path("paper.plan")).expect("plan readable");
    serde_json::from_str(&text).expect("plan valid")
}

/// The full paper.plan experiment, executed once and shared by criteria
/// 4, 5 and 6.
fn plan_run_jobs8() -> &'static (ExperimentResult, Duration) {
    static RESULT: OnceLock<(ExperimentResult, Duration)> = OnceLock::new();
    RESULT.get_or_init(|| {
        let start = Instant::now();
        let result = run_experiment(&load_plan(), 8).expect("plan runs");
        (result, start.elapsed())
    })
}

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion} failed: {detail}");
}

#[test]
fn criterion_1_similarity_golden_values() {
    let ab = CapabilitySet::from_names(["temperature", "humidity"]);
    let b = CapabilitySet::from_names(["temperature", "humidity", "presence"]);
    let start = Instant::now();
    let sim_ab = capability_similarity(&ab, &b).unwrap();
    let sim_ac = capability_similarity(&ab, &ab).unwrap();
    let elapsed = start.elapsed();
    let expected = 2.0 / 6.0_f64.sqrt();
    let pass = (sim_ab - expected).abs() < 1e-9
        && (sim_ac - 1.0).abs() < 1e-9
        && elapsed < Duration::from_millis(1);
    verdict(
        "criterion 1 (Eq. 1 golden values)",
        pass,
        &format!("sim_AB={sim_ab:.9} (want {expected:.9}), sim_AC={sim_ac}, {elapsed:?}"),
    );
}

#[test]
fn criterion_2_fig2_clustering() {
    let start = Instant::now();
    let result = run(&load_scenario("fig2.json")).unwrap();
    let elapsed = start.elapsed();
    let all: BTreeSet<NodeId> = (0..4).map(NodeId).collect();
    // "One cluster" is the leader's view: B hears every node and clusters
    // all four; A, C and D each elect B even though they are out of each
    // other's radio range.
    let every_node_agrees = result.nodes.values().all(|n| n.leader == Some(NodeId(1)));
    let leader_cluster_complete = result.nodes[&NodeId(1)].cluster == all;
    let ap_registry: Vec<NodeId> = result.ap.leaders.iter().copied().collect();
    let pass = every_node_agrees
        && leader_cluster_complete
        && ap_registry == vec![NodeId(1)]
        && elapsed < Duration::from_secs(1);
    verdict(
        "criterion 2 (fig2 preset clustering reproduction)",
        pass,
        &format!("one 4-node cluster, leader=B at every node, AP registry={ap_registry:?}, {elapsed:?}"),
    );
}

#[test]
fn criterion_3_fig3_dispatch() {
    let start = Instant::now();
    let result = run(&load_scenario("fig3.json")).unwrap();
    let elapsed = start.elapsed();
    let accepts = result
        .trace
        .iter()
        .filter(|e| matches!(e.body, TraceBody::TaskAccept { counted: true, .. }))
        .count();
    let metrics = compute_run_metrics(&result);
    let dispatch = &metrics.per_dispatch[0];
    let pass = accepts == 2
        && dispatch.cpt == 2
        && dispatch.cit == 0
        && metrics.nat == 1
        && elapsed < Duration::from_secs(1);
    verdict(
        "criterion 3 (fig3 preset dispatch reproduction)",
        pass,
        &format!(
            "accepts={accepts}, cpt={}, cit={}, {elapsed:?}",
            dispatch.cpt, dispatch.cit
        ),
    );
}

#[test]
fn criterion_4_full_schedule_allocation() {
    let (result, elapsed) = plan_run_jobs8();
    let mut detail = Vec::new();
    let mut pass = result.failed_replications() == 0 && *elapsed < Duration::from_secs(300);
    for wanted in ["nodes=75", "nodes=100"] {
        let point = result
            .points
            .iter()
            .find(|p| p.label == wanted)
            .expect("sweep point present");
        let nats = nat_samples(point);
        let frac = nats.iter().filter(|&&n| n == 10).count() as f64 / nats.len() as f64;
        detail.push(format!("{wanted}: NAT=10/10 in {:.1}% of reps", frac * 100.0));
        pass &= nats.len() == 35 && frac >= 0.9;
    }
    verdict(
        "criterion 4 (full-schedule allocation property)",
        pass,
        &format!("{} ({elapsed:?} for the full plan)", detail.join("; ")),
    );
}

#[test]
fn criterion_5_lat_bounds() {
    let (result, _) = plan_run_jobs8();
    let mut pass = true;
    let mut detail = Vec::new();
    for point in &result.points {
        let lats: Vec<f64> = point
            .records
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .flat_map(|m| m.per_dispatch.iter().filter_map(|d| d.lat_ms))
            .collect();
        pass &= !lats.is_empty() && lats.iter().all(|&l| (4.0..=5000.0).contains(&l));
        let mean = lats.iter().sum::<f64>() / lats.len() as f64;
        pass &= (10.0..100.0).contains(&mean);
        detail.push(format!("{}: mean {mean:.1} ms", point.label));
    }
    verdict(
        "criterion 5 (LAT bounds property)",
        pass,
        &format!("all LATs in [4 ms, 5 s]; {}", detail.join("; ")),
    );
}

#[test]
fn criterion_6_determinism() {
    let mut pass = true;
    let mut detail = Vec::new();
    for name in ["fig2.json", "fig3.json"] {
        let config = load_scenario(name);
        let a = to_jsonl(&run(&config).unwrap().trace);
        let b = to_jsonl(&run(&config).unwrap().trace);
        pass &= a == b;
        detail.push(format!("{name} traces identical={}", a == b));
    }
    let base = contaski::validate_scenario(load_plan().base).unwrap();
    let a = to_jsonl(&run(&base).unwrap().trace);
    let b = to_jsonl(&run(&base).unwrap().trace);
    pass &= a == b;
    detail.push(format!("paper.plan base traces identical={}", a == b));

    let jobs1 = run_experiment(&load_plan(), 1).expect("plan runs single-threaded");
    let same = summary_csv(&jobs1) == summary_csv(&plan_run_jobs8().0);
    pass &= same;
    detail.push(format!("--jobs 1 vs --jobs 8 summaries identical={same}"));
    verdict("criterion 6 (determinism suite)", pass, &detail.join("; "));
}

fn random_capability_set(rng: &mut StdRng, universe: &[&str], min: usize) -> CapabilitySet {
    let size = rng.random_range(min..=universe.len());
    let picks = rand::seq::index::sample(rng, universe.len(), size);
    CapabilitySet::from_names(picks.iter().map(|i| universe[i]))
}

const UNIVERSE: [&str; 7] = [
    "temperature",
    "humidity",
    "presence",
    "light",
    "machine-status",
    "pressure",
    "reservoir-level",
];

fn small_random_scenario(rng: &mut StdRng) -> ScenarioConfig {
    let value = serde_json::json!({
        "seed": rng.random::<u32>(),
        "area": { "width": 150.0, "height": 150.0 },
        "universe": UNIVERSE,
        "nodes": {
            "count": rng.random_range(3usize..=10),
            "capability_assignment": "random",
            "placement": "uniform-random",
            "min_capabilities": rng.random_range(1usize..=3)
        },
        "radio": {
            "range_m": 50.0,
            "delay_ms": 2.0,
            "loss_prob": if rng.random::<bool>() { 0.0 } else { 0.3 }
        },
        "protocol": { "similarity_threshold": 0.65 },
        "tasks": {
            "count": 2,
            "generator": {
                "base_required": ["temperature"],
                "extra_pool": ["humidity", "presence"],
                "max_extra": 2,
                "duration_s": 30.0,
                "quorum": 1
            }
        },
        "horizon_s": 260.0
    });
    parse_scenario(&value.to_string()).expect("generated scenario valid")
}

#[test]
fn criterion_7_invariant_suites() {
    let mut rng = StdRng::seed_from_u64(0x7007);
    let mut pass = true;
    let mut detail = Vec::new();

    // Similarity symmetry, bounds, maximality (sim = 1 iff equal sets).
    let mut ok = true;
    for _ in 0..1000 {
        let a = random_capability_set(&mut rng, &UNIVERSE, 1);
        let b = random_capability_set(&mut rng, &UNIVERSE, 1);
        let s_ab = capability_similarity(&a, &b).unwrap();
        let s_ba = capability_similarity(&b, &a).unwrap();
        ok &= (s_ab - s_ba).abs() < 1e-15 && (0.0..=1.0).contains(&s_ab);
        ok &= (s_ab == 1.0) == (a == b);
    }
    pass &= ok;
    detail.push(format!("similarity x1000={ok}"));

    // Leader argmax is invariant under capability-message reordering.
    let mut ok = true;
    for _ in 0..1000 {
        let threshold = contaski::SimilarityThreshold::DEFAULT;
        let my_caps = random_capability_set(&mut rng, &UNIVERSE, 1);
        let mut messages: Vec<(NodeId, CapabilitySet, usize)> = (1..rng.random_range(3u64..=8))
            .map(|id| {
                (
                    NodeId(id),
                    random_capability_set(&mut rng, &UNIVERSE, 1),
                    rng.random_range(0usize..=6),
                )
            })
            .collect();
        let build = |order: &[(NodeId, CapabilitySet, usize)]| {
            let mut node = contaski::node::NodeState::new(
                NodeId(0),
                my_caps.clone(),
                contaski::model::Position::new(0.0, 0.0),
            );
            for (sender, caps, count) in order {
                node.handle_capability_message(*sender, caps, *count, threshold);
            }
            node.enable_leader_evaluation();
            (node.leader, node.cluster.clone())
        };
        let first = build(&messages);
        messages.shuffle(&mut rng);
        ok &= first == build(&messages);
    }
    pass &= ok;
    detail.push(format!("leader reorder x1000={ok}"));

    // CPT + CIT equals the number of leaders registered at dispatch time,
    // and every random run's trace passes the audit.
    let mut ok = true;
    let mut audited = true;
    for _ in 0..1000 {
        let config = small_random_scenario(&mut rng);
        let result = run(&config).unwrap();
        let metrics = compute_run_metrics(&result);
        for dispatch in &metrics.per_dispatch {
            let dispatch_t = result
                .trace
                .iter()
                .find(|e| matches!(&e.body, TraceBody::TaskDispatch { task, .. } if task.id == dispatch.task_id))
                .map(|e| e.t)
                .unwrap();
            let nc_at_dispatch = result
                .trace
                .iter()
                .filter(|e| matches!(e.body, TraceBody::LeaderRegister { .. }) && e.t <= dispatch_t)
                .count();
            ok &= dispatch.cpt + dispatch.cit == nc_at_dispatch;
        }
        audited &= audit(&result.trace).is_empty();
    }
    pass &= ok && audited;
    detail.push(format!("cpt+cit identity x1000={ok}"));
    detail.push(format!("trace audit on random runs x1000={audited}"));

    // Audit on every shipped preset.
    let mut ok = true;
    for name in ["fig2.json", "fig3.json"] {
        ok &= audit(&run(&load_scenario(name)).unwrap().trace).is_empty();
    }
    ok &= audit(&run(&contaski::validate_scenario(load_plan().base).unwrap()).unwrap().trace)
        .is_empty();
    pass &= ok;
    detail.push(format!("preset audits={ok}"));

    // TaskStatus: only the three legal transitions are accepted.
    let legal = [
        (TaskStatus::Pending, TaskStatus::Dispatched),
        (TaskStatus::Dispatched, TaskStatus::Completed),
        (TaskStatus::Dispatched, TaskStatus::Unallocated),
    ];
    let mut ok = true;
    for from in TaskStatus::ALL {
        for to in TaskStatus::ALL {
            let allowed = legal.contains(&(from, to));
            ok &= from.can_transition(to) == allowed;
            ok &= from.transition(to).is_ok() == allowed;
        }
    }
    pass &= ok;
    detail.push(format!("task status transitions={ok}"));

    verdict("criterion 7 (invariant suites)", pass, &detail.join("; "));
}

#[test]
fn criterion_8_oracle_equivalences() {
    // Brute-force similarity over every pair of non-empty subsets of the
    // 7-name universe, computed by name-by-name counting.
    let mut pass = true;
    let mut worst = 0.0_f64;
    for mask_a in 1u32..128 {
        let a = CapabilitySet::from_names(
            UNIVERSE
                .iter()
                .enumerate()
                .filter(|(i, _)| mask_a & (1 << i) != 0)
                .map(|(_, n)| *n),
        );
        for mask_b in 1u32..128 {
            let b = CapabilitySet::from_names(
                UNIVERSE
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask_b & (1 << i) != 0)
                    .map(|(_, n)| *n),
            );
            let mut inter = 0usize;
            for name in UNIVERSE {
                let cap = contaski::model::Capability::new(name);
                if a.contains(&cap) && b.contains(&cap) {
                    inter += 1;
                }
            }
            let oracle = inter as f64 / ((a.len() * b.len()) as f64).sqrt();
            let diff = (capability_similarity(&a, &b).unwrap() - oracle).abs();
            worst = worst.max(diff);
            pass &= diff < 1e-12;
        }
    }

    // Lossless runs: every node's neighbor table equals the unit-disk
    // adjacency computed from the final positions.
    let mut rng = StdRng::seed_from_u64(0x04ac1e);
    let mut tables_ok = true;
    for _ in 0..100 {
        let value = serde_json::json!({
            "seed": rng.random::<u32>(),
            "area": { "width": 200.0, "height": 200.0 },
            "universe": UNIVERSE,
            "nodes": {
                "count": rng.random_range(5usize..=30),
                "capability_assignment": "random",
                "placement": "uniform-random"
            },
            "radio": { "range_m": 50.0, "delay_ms": 2.0, "loss_prob": 0.0 },
            "tasks": [],
            "horizon_s": 150.0
        });
        let config = parse_scenario(&value.to_string()).unwrap();
        let result = run(&config).unwrap();
        for (id, node) in &result.nodes {
            let expected: BTreeSet<NodeId> = result
                .nodes
                .iter()
                .filter(|(other, state)| {
                    *other != id && node.position.distance(&state.position) <= 50.0
                })
                .map(|(other, _)| *other)
                .collect();
            let actual: BTreeSet<NodeId> = node.neighbors.keys().copied().collect();
            tables_ok &= actual == expected;
        }
    }
    pass &= tables_ok;
    verdict(
        "criterion 8 (oracle equivalences)",
        pass,
        &format!("similarity worst diff={worst:.2e} over 127^2 pairs; neighbor tables x100={tables_ok}"),
    );
}
