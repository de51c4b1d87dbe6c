//! Seeded discrete-event simulator: event queue with a virtual clock, node
//! placement, the unit-disk broadcast channel with fixed delay and Bernoulli
//! loss, and the run loop that drives the protocol state machines.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::ap::{ApState, DispatchOutcome};
use crate::model::{
    Capability, CapabilitySet, Message, NodeId, Position, SimDuration, SimTime, Task, TaskId,
};
use crate::node::{NodeEffect, NodeState};
use crate::scenario::{
    CapabilityAssignment, NodesSpec, PlacementStrategy, ScenarioConfig, TaskSchedule, TasksSpec,
};
use crate::trace::{DropReason, Endpoint, TraceBody, TraceEvent};

/// One seeded generator per concern, so changing one knob does not perturb
/// the draws of another.
pub fn stream_rng(seed: u64, tag: &str) -> ChaCha12Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    let tag_bytes = tag.as_bytes();
    let n = tag_bytes.len().min(24);
    bytes[8..8 + n].copy_from_slice(&tag_bytes[..n]);
    ChaCha12Rng::from_seed(bytes)
}

#[derive(Clone, PartialEq, Eq, Debug)]
enum EventPayload {
    CapabilityRound { node: NodeId },
    LeaderEvaluation { node: NodeId },
    Deliver { from: Endpoint, to: Endpoint, message: Message },
    /// A leader's jittered reply to a TaskDispatch (accept to the AP and the
    /// matching cluster notification), staggered to avoid simultaneous
    /// transmissions from every apt leader.
    ResponseSend { node: NodeId, message: Message },
    TaskDispatchDue,
    WindowClose { task_id: TaskId },
    TaskComplete { node: NodeId, task_id: TaskId },
}

/// Queue entry; pops in (fire_time, sequence) order. The sequence number is
/// assigned at insertion and strictly increasing, giving a total order even
/// at equal timestamps.
#[derive(Clone, PartialEq, Eq, Debug)]
struct SimEvent {
    fire_time: SimTime,
    sequence: u64,
    payload: EventPayload,
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.fire_time, self.sequence).cmp(&(other.fire_time, other.sequence))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("event queue overflow: more than {cap} events scheduled")]
    EventOverflow { cap: u64 },
}

/// Everything a finished run exposes: final node states, the AP ledger and
/// the complete event trace.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub nodes: BTreeMap<NodeId, NodeState>,
    pub ap: ApState,
    pub trace: Vec<TraceEvent>,
}

/// Lays out `count` positions. Explicit coordinates are handled by the
/// caller; this covers the generated strategies.
pub fn place_nodes(
    strategy: PlacementStrategy,
    width: f64,
    height: f64,
    count: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<Position> {
    match strategy {
        PlacementStrategy::Grid => {
            let cols = (count as f64).sqrt().ceil() as usize;
            let rows = count.div_ceil(cols);
            let cell_w = width / cols as f64;
            let cell_h = height / rows as f64;
            (0..count)
                .map(|i| {
                    let col = i % cols;
                    let row = i / cols;
                    Position::new(
                        (col as f64 + 0.5) * cell_w,
                        (row as f64 + 0.5) * cell_h,
                    )
                })
                .collect()
        }
        PlacementStrategy::UniformRandom => (0..count)
            .map(|_| Position::new(rng.random::<f64>() * width, rng.random::<f64>() * height))
            .collect(),
    }
}

/// Expands the node spec into concrete (id, position, capabilities) triples,
/// consuming the placement and capability streams.
pub fn resolve_nodes(config: &ScenarioConfig) -> Vec<(NodeId, Position, CapabilitySet)> {
    let mut placement_rng = stream_rng(config.seed, "placement");
    let mut caps_rng = stream_rng(config.seed, "caps");
    let area = config.area;

    match &config.nodes {
        NodesSpec::Explicit(list) => list
            .iter()
            .map(|spec| {
                let pos = spec.pos.unwrap_or_else(|| {
                    Position::new(
                        placement_rng.random::<f64>() * area.width,
                        placement_rng.random::<f64>() * area.height,
                    )
                });
                (
                    NodeId(spec.id),
                    pos,
                    CapabilitySet::from_names(spec.capabilities.iter().cloned()),
                )
            })
            .collect(),
        NodesSpec::Generated(gen) => {
            let positions = place_nodes(
                gen.placement,
                area.width,
                area.height,
                gen.count,
                &mut placement_rng,
            );
            let universe: Vec<Capability> = config
                .universe
                .iter()
                .map(|n| Capability::new(n.clone()))
                .collect();
            let max = gen.max_capabilities.unwrap_or(universe.len());
            positions
                .into_iter()
                .enumerate()
                .map(|(i, pos)| {
                    let size = caps_rng.random_range(gen.min_capabilities..=max);
                    let picks =
                        rand::seq::index::sample(&mut caps_rng, universe.len(), size);
                    let caps: CapabilitySet =
                        picks.iter().map(|k| universe[k].clone()).collect();
                    let CapabilityAssignment::Random = gen.capability_assignment;
                    (NodeId(i as u64), pos, caps)
                })
                .collect()
        }
    }
}

/// Expands the task spec into concrete tasks with their dispatch times,
/// consuming the task-generation stream.
pub fn resolve_tasks(config: &ScenarioConfig) -> Vec<(Task, SimTime)> {
    let mut taskgen_rng = stream_rng(config.seed, "taskgen");
    match &config.tasks {
        TasksSpec::Explicit(list) => {
            let schedule = TaskSchedule::default();
            list.iter()
                .enumerate()
                .map(|(i, spec)| {
                    (
                        Task {
                            id: TaskId(spec.id),
                            required: CapabilitySet::from_names(spec.required.iter().cloned()),
                            duration: SimDuration::from_secs_f64(spec.duration_s),
                            quorum: spec.quorum,
                        },
                        SimTime::from_secs_f64(
                            schedule.start_s + schedule.interval_s * i as f64,
                        ),
                    )
                })
                .collect()
        }
        TasksSpec::Generated(gen) => {
            let pool: Vec<Capability> = gen
                .generator
                .extra_pool
                .iter()
                .map(|n| Capability::new(n.clone()))
                .collect();
            (0..gen.count)
                .map(|i| {
                    let mut required =
                        CapabilitySet::from_names(gen.generator.base_required.iter().cloned());
                    let extras = taskgen_rng.random_range(0..=gen.generator.max_extra);
                    if extras > 0 {
                        for k in rand::seq::index::sample(&mut taskgen_rng, pool.len(), extras) {
                            required.insert(pool[k].clone());
                        }
                    }
                    (
                        Task {
                            id: TaskId(i as u64 + 1),
                            required,
                            duration: SimDuration::from_secs_f64(gen.generator.duration_s),
                            quorum: gen.generator.quorum,
                        },
                        SimTime::from_secs_f64(
                            gen.schedule.start_s + gen.schedule.interval_s * i as f64,
                        ),
                    )
                })
                .collect()
        }
    }
}

struct Engine {
    nodes: BTreeMap<NodeId, NodeState>,
    ap: ApState,
    queue: BinaryHeap<Reverse<SimEvent>>,
    next_sequence: u64,
    scheduled_total: u64,
    max_events: u64,
    trace: Vec<TraceEvent>,
    jitter_rng: ChaCha12Rng,
    loss_rng: ChaCha12Rng,
    range_m: f64,
    response_jitter_max_ms: f64,
    delay: SimDuration,
    loss_prob: f64,
    ap_loss_prob: f64,
    threshold: crate::similarity::SimilarityThreshold,
    horizon: SimTime,
}

impl Engine {
    fn schedule(&mut self, fire_time: SimTime, payload: EventPayload) -> Result<(), RunError> {
        self.scheduled_total += 1;
        if self.scheduled_total > self.max_events {
            return Err(RunError::EventOverflow {
                cap: self.max_events,
            });
        }
        self.queue.push(Reverse(SimEvent {
            fire_time,
            sequence: self.next_sequence,
            payload,
        }));
        self.next_sequence += 1;
        Ok(())
    }

    fn record(&mut self, t: SimTime, from: Option<Endpoint>, to: Option<Endpoint>, body: TraceBody) {
        self.trace.push(TraceEvent {
            t: t.as_secs_f64(),
            from,
            to,
            body,
        });
    }

    /// Unit-disk broadcast: every other node within range is a candidate;
    /// an independent Bernoulli draw per candidate, in id order, decides
    /// delivery. Out-of-range nodes are recorded without consuming the
    /// loss stream.
    fn deliver_broadcast(
        &mut self,
        sender: NodeId,
        message: Message,
        now: SimTime,
    ) -> Result<(), RunError> {
        self.record(
            now,
            Some(Endpoint::Node(sender)),
            None,
            TraceBody::Send {
                message: message.clone(),
            },
        );
        let sender_pos = self.nodes[&sender].position;
        let recipients: Vec<NodeId> = self.nodes.keys().copied().filter(|id| *id != sender).collect();
        for id in recipients {
            let dist = sender_pos.distance(&self.nodes[&id].position);
            if dist > self.range_m {
                self.record(
                    now,
                    Some(Endpoint::Node(sender)),
                    Some(Endpoint::Node(id)),
                    TraceBody::Drop {
                        message: message.clone(),
                        reason: DropReason::OutOfRange,
                    },
                );
                continue;
            }
            if self.loss_rng.random::<f64>() < self.loss_prob {
                self.record(
                    now,
                    Some(Endpoint::Node(sender)),
                    Some(Endpoint::Node(id)),
                    TraceBody::Drop {
                        message: message.clone(),
                        reason: DropReason::Loss,
                    },
                );
                continue;
            }
            self.schedule(
                now + self.delay,
                EventPayload::Deliver {
                    from: Endpoint::Node(sender),
                    to: Endpoint::Node(id),
                    message: message.clone(),
                },
            )?;
        }
        Ok(())
    }

    /// Directed delivery. AP links ignore the unit-disk check and use their
    /// own loss probability.
    fn deliver_unicast(
        &mut self,
        from: Endpoint,
        to: Endpoint,
        message: Message,
        now: SimTime,
    ) -> Result<(), RunError> {
        self.record(
            now,
            Some(from),
            Some(to),
            TraceBody::Send {
                message: message.clone(),
            },
        );
        let loss_prob = if from == Endpoint::Ap || to == Endpoint::Ap {
            self.ap_loss_prob
        } else {
            self.loss_prob
        };
        if self.loss_rng.random::<f64>() < loss_prob {
            self.record(
                now,
                Some(from),
                Some(to),
                TraceBody::Drop {
                    message,
                    reason: DropReason::Loss,
                },
            );
            return Ok(());
        }
        self.schedule(now + self.delay, EventPayload::Deliver { from, to, message })
    }

    fn apply_node_effects(
        &mut self,
        node: NodeId,
        effects: Vec<NodeEffect>,
        now: SimTime,
    ) -> Result<(), RunError> {
        for effect in effects {
            match effect {
                NodeEffect::Broadcast(message) => {
                    self.deliver_broadcast(node, message, now)?;
                }
                NodeEffect::SendToAp(message) => {
                    self.deliver_unicast(Endpoint::Node(node), Endpoint::Ap, message, now)?;
                }
                NodeEffect::ClusterChanged(members) => {
                    self.record(
                        now,
                        None,
                        None,
                        TraceBody::ClusterUpdate { node, members },
                    );
                }
                NodeEffect::LeaderChanged(leader) => {
                    self.record(now, None, None, TraceBody::LeaderElected { node, leader });
                }
                NodeEffect::TaskStarted {
                    task_id,
                    complete_at,
                } => {
                    self.record(now, None, None, TraceBody::TaskStart { node, task_id });
                    self.schedule(complete_at, EventPayload::TaskComplete { node, task_id })?;
                }
                NodeEffect::ProtocolViolation(note) => {
                    self.record(now, None, None, TraceBody::ProtocolViolation { note });
                }
            }
        }
        Ok(())
    }

    /// Like `apply_node_effects`, but the outgoing messages (the TaskAccept
    /// and the LeaderToCluster notification) are deferred by one shared
    /// uniform draw from [0, response_jitter_max], staggering the replies of
    /// leaders that all heard the same dispatch.
    fn apply_dispatch_effects(
        &mut self,
        node: NodeId,
        effects: Vec<NodeEffect>,
        now: SimTime,
    ) -> Result<(), RunError> {
        let (sends, rest): (Vec<NodeEffect>, Vec<NodeEffect>) = effects
            .into_iter()
            .partition(|e| matches!(e, NodeEffect::Broadcast(_) | NodeEffect::SendToAp(_)));
        if !sends.is_empty() {
            let jitter_ms = self.jitter_rng.random::<f64>() * self.response_jitter_max_ms;
            let send_at = now + SimDuration::from_millis_f64(jitter_ms);
            for effect in sends {
                let message = match effect {
                    NodeEffect::Broadcast(m) | NodeEffect::SendToAp(m) => m,
                    _ => unreachable!("partition keeps only send effects"),
                };
                self.schedule(send_at, EventPayload::ResponseSend { node, message })?;
            }
        }
        self.apply_node_effects(node, rest, now)
    }

    fn handle_deliver(
        &mut self,
        from: Endpoint,
        to: Endpoint,
        message: Message,
        now: SimTime,
    ) -> Result<(), RunError> {
        self.record(
            now,
            Some(from),
            Some(to),
            TraceBody::Deliver {
                message: message.clone(),
            },
        );
        match to {
            Endpoint::Node(id) => {
                let threshold = self.threshold;
                let node = self.nodes.get_mut(&id).expect("delivery to known node");
                let effects = match message {
                    Message::CapabilityDissemination {
                        sender,
                        capabilities,
                        neigh_count,
                    } => node.handle_capability_message(sender, &capabilities, neigh_count, threshold),
                    Message::TaskDispatch { task } => {
                        let effects = node.handle_task_dispatch(&task, now);
                        return self.apply_dispatch_effects(id, effects, now);
                    }
                    Message::LeaderToCluster { task_id, duration } => match from {
                        Endpoint::Node(sender) => {
                            node.handle_leader_to_cluster(sender, task_id, duration, now)
                        }
                        Endpoint::Ap => vec![NodeEffect::ProtocolViolation(
                            "LeaderToCluster from the AP".to_string(),
                        )],
                    },
                    other => vec![NodeEffect::ProtocolViolation(format!(
                        "node {id} received unexpected message {other:?}"
                    ))],
                };
                self.apply_node_effects(id, effects, now)
            }
            Endpoint::Ap => {
                match message {
                    Message::LeaderRegister { leader } => {
                        if self.ap.handle_leader_register(leader) {
                            self.record(now, None, None, TraceBody::LeaderRegister { leader });
                        }
                    }
                    Message::TaskAccept { leader, task_id } => {
                        use crate::ap::AcceptOutcome;
                        match self.ap.handle_task_accept(leader, task_id, now) {
                            AcceptOutcome::Recorded { .. } => self.record(
                                now,
                                None,
                                None,
                                TraceBody::TaskAccept {
                                    leader,
                                    task_id,
                                    counted: true,
                                },
                            ),
                            AcceptOutcome::LateIgnored => self.record(
                                now,
                                None,
                                None,
                                TraceBody::TaskAccept {
                                    leader,
                                    task_id,
                                    counted: false,
                                },
                            ),
                            AcceptOutcome::UnknownTask => self.record(
                                now,
                                None,
                                None,
                                TraceBody::ProtocolViolation {
                                    note: format!(
                                        "accept from {leader} for unknown task {task_id}"
                                    ),
                                },
                            ),
                        }
                    }
                    other => self.record(
                        now,
                        None,
                        None,
                        TraceBody::ProtocolViolation {
                            note: format!("AP received unexpected message {other:?}"),
                        },
                    ),
                }
                Ok(())
            }
        }
    }
}

/// Executes a validated scenario to the horizon. Identical config and seed
/// produce a bit-identical trace.
pub fn run(config: &ScenarioConfig) -> Result<RunResult, RunError> {
    let resolved_nodes = resolve_nodes(config);
    let resolved_tasks = resolve_tasks(config);

    let mut engine = Engine {
        nodes: resolved_nodes
            .iter()
            .map(|(id, pos, caps)| (*id, NodeState::new(*id, caps.clone(), *pos)))
            .collect(),
        ap: ApState::new(resolved_tasks.clone()),
        queue: BinaryHeap::new(),
        next_sequence: 0,
        scheduled_total: 0,
        max_events: config.max_events,
        trace: Vec::new(),
        jitter_rng: stream_rng(config.seed, "jitter"),
        loss_rng: stream_rng(config.seed, "loss"),
        range_m: config.radio.range_m,
        response_jitter_max_ms: config.protocol.response_jitter_max_ms,
        delay: SimDuration::from_millis_f64(config.radio.delay_ms),
        loss_prob: config.radio.loss_prob,
        ap_loss_prob: config.radio.ap_loss_prob,
        threshold: config.protocol.similarity_threshold,
        horizon: SimTime::from_secs_f64(config.horizon_s),
    };

    // Capability rounds are spread across the warm-up window, each with a
    // fresh uniform jitter; the leader evaluation timer fires one period
    // after the last round, still inside warm-up.
    let period = config.protocol.round_period_s();
    let jitter_max = config.protocol.jitter_max_ms;
    let node_ids: Vec<NodeId> = engine.nodes.keys().copied().collect();
    for id in &node_ids {
        for round in 0..config.protocol.capability_rounds {
            let jitter_ms = engine.jitter_rng.random::<f64>() * jitter_max;
            let t = SimTime::from_secs_f64(round as f64 * period)
                + SimDuration::from_millis_f64(jitter_ms);
            engine.schedule(t, EventPayload::CapabilityRound { node: *id })?;
        }
        engine.schedule(
            SimTime::from_secs_f64(config.protocol.capability_rounds as f64 * period),
            EventPayload::LeaderEvaluation { node: *id },
        )?;
    }

    for (_, scheduled_at) in &resolved_tasks {
        engine.schedule(*scheduled_at, EventPayload::TaskDispatchDue)?;
    }

    let window = SimDuration::from_millis_f64(config.protocol.confirmation_window_ms);
    while let Some(Reverse(event)) = engine.queue.pop() {
        let now = event.fire_time;
        if now > engine.horizon {
            break;
        }
        match event.payload {
            EventPayload::CapabilityRound { node } => {
                let message = engine.nodes[&node].capability_message();
                engine.deliver_broadcast(node, message, now)?;
            }
            EventPayload::LeaderEvaluation { node } => {
                let effects = engine
                    .nodes
                    .get_mut(&node)
                    .unwrap()
                    .enable_leader_evaluation();
                engine.apply_node_effects(node, effects, now)?;
            }
            EventPayload::Deliver { from, to, message } => {
                engine.handle_deliver(from, to, message, now)?;
            }
            EventPayload::ResponseSend { node, message } => match &message {
                Message::LeaderToCluster { .. } => {
                    engine.deliver_broadcast(node, message, now)?;
                }
                _ => {
                    engine.deliver_unicast(Endpoint::Node(node), Endpoint::Ap, message, now)?;
                }
            },
            EventPayload::TaskDispatchDue => match engine.ap.dispatch_due_task(now) {
                DispatchOutcome::Multicast { task, leaders } => {
                    engine.record(
                        now,
                        Some(Endpoint::Ap),
                        None,
                        TraceBody::TaskDispatch {
                            task: task.clone(),
                            leaders: leaders.clone(),
                        },
                    );
                    for leader in leaders {
                        engine.deliver_unicast(
                            Endpoint::Ap,
                            Endpoint::Node(leader),
                            Message::TaskDispatch { task: task.clone() },
                            now,
                        )?;
                    }
                    engine.schedule(
                        now + window,
                        EventPayload::WindowClose { task_id: task.id },
                    )?;
                }
                DispatchOutcome::NoLeaders { task_id } => {
                    let task = engine
                        .ap
                        .task_list
                        .iter()
                        .find(|e| e.task.id == task_id)
                        .unwrap()
                        .task
                        .clone();
                    engine.record(
                        now,
                        Some(Endpoint::Ap),
                        None,
                        TraceBody::TaskDispatch {
                            task,
                            leaders: Vec::new(),
                        },
                    );
                    engine.record(
                        now,
                        None,
                        None,
                        TraceBody::WindowClose {
                            task_id,
                            accepts: 0,
                            status: crate::model::TaskStatus::Unallocated,
                            lat_ms: None,
                        },
                    );
                }
                DispatchOutcome::Idle => {}
            },
            EventPayload::WindowClose { task_id } => {
                let summary = engine.ap.close_confirmation_window(task_id, now);
                engine.record(
                    now,
                    None,
                    None,
                    TraceBody::WindowClose {
                        task_id,
                        accepts: summary.accepts,
                        status: summary.status,
                        lat_ms: summary.lat.map(|d| d.as_millis_f64()),
                    },
                );
            }
            EventPayload::TaskComplete { node, task_id } => {
                engine.nodes.get_mut(&node).unwrap().complete_task(task_id);
                engine.record(now, None, None, TraceBody::TaskComplete { node, task_id });
            }
        }
    }

    Ok(RunResult {
        nodes: engine.nodes,
        ap: engine.ap,
        trace: engine.trace,
    })
}
