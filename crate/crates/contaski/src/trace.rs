//! Structured event trace: the line-delimited JSON record of everything a
//! run did, plus an auditor that replays protocol invariants over a trace.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::model::{Message, NodeId, Task, TaskId, TaskStatus};
use crate::similarity::required_subset;

/// A message endpoint: either a sensing node or the access point.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Endpoint {
    Node(NodeId),
    Ap,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Node(id) => write!(f, "{id}"),
            Endpoint::Ap => f.write_str("ap"),
        }
    }
}

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Endpoint::Node(id) => s.serialize_u64(id.0),
            Endpoint::Ap => s.serialize_str("ap"),
        }
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Endpoint;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a node id or \"ap\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Endpoint, E> {
                Ok(Endpoint::Node(NodeId(v)))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Endpoint, E> {
                if v == "ap" {
                    Ok(Endpoint::Ap)
                } else {
                    v.parse::<u64>()
                        .map(|n| Endpoint::Node(NodeId(n)))
                        .map_err(|_| E::custom("expected node id or \"ap\""))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// One trace line: `{t, kind, from, to, detail}`.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Simulated time in seconds.
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<Endpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<Endpoint>,
    #[serde(flatten)]
    pub body: TraceBody,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum TraceBody {
    Send {
        message: Message,
    },
    Deliver {
        message: Message,
    },
    Drop {
        message: Message,
        reason: DropReason,
    },
    ClusterUpdate {
        node: NodeId,
        members: Vec<NodeId>,
    },
    LeaderElected {
        node: NodeId,
        leader: NodeId,
    },
    LeaderRegister {
        leader: NodeId,
    },
    TaskDispatch {
        task: Task,
        leaders: Vec<NodeId>,
    },
    TaskAccept {
        leader: NodeId,
        task_id: TaskId,
        /// False for accepts arriving after the confirmation window closed.
        counted: bool,
    },
    TaskStart {
        node: NodeId,
        task_id: TaskId,
    },
    TaskComplete {
        node: NodeId,
        task_id: TaskId,
    },
    WindowClose {
        task_id: TaskId,
        accepts: usize,
        status: TaskStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lat_ms: Option<f64>,
    },
    ProtocolViolation {
        note: String,
    },
}

impl TraceBody {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceBody::Send { .. } => "send",
            TraceBody::Deliver { .. } => "deliver",
            TraceBody::Drop { .. } => "drop",
            TraceBody::ClusterUpdate { .. } => "cluster_update",
            TraceBody::LeaderElected { .. } => "leader_elected",
            TraceBody::LeaderRegister { .. } => "leader_register",
            TraceBody::TaskDispatch { .. } => "task_dispatch",
            TraceBody::TaskAccept { .. } => "task_accept",
            TraceBody::TaskStart { .. } => "task_start",
            TraceBody::TaskComplete { .. } => "task_complete",
            TraceBody::WindowClose { .. } => "window_close",
            TraceBody::ProtocolViolation { .. } => "protocol_violation",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Loss,
    OutOfRange,
}

/// Serialize a trace as line-delimited JSON. Output is byte-stable for a
/// given trace: all collections are ordered and floats print canonically.
pub fn to_jsonl(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&serde_json::to_string(ev).expect("trace events serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, thiserror::Error)]
#[error("trace line {line}: {source}")]
pub struct TraceParseError {
    pub line: usize,
    #[source]
    pub source: serde_json::Error,
}

pub fn from_jsonl(text: &str) -> Result<Vec<TraceEvent>, TraceParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| TraceParseError {
                line: i + 1,
                source,
            })
        })
        .collect()
}

/// A violated protocol invariant found while replaying a trace.
#[derive(Clone, PartialEq, Debug)]
pub struct AuditViolation {
    /// Index of the offending event within the trace.
    pub index: usize,
    pub description: String,
}

impl fmt::Display for AuditViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "event {}: {}", self.index, self.description)
    }
}

/// Replays protocol invariants over a trace:
///
/// - causality: fire times are non-decreasing;
/// - no delivery or drop without a prior matching send;
/// - acceptance soundness: every emitted `TaskAccept` satisfied both
///   Algorithm guards (required ⊆ capabilities and |cluster| ≥ quorum)
///   at emission time, reconstructed from the trace itself;
/// - window bookkeeping: counted accepts fall inside the dispatch window
///   and the close event's accept count and status agree with them;
/// - every dispatch names only registered leaders.
pub fn audit(events: &[TraceEvent]) -> Vec<AuditViolation> {
    use std::collections::{BTreeMap, BTreeSet};

    let mut violations = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    // Latest announced capabilities per node, learned from their sends.
    let mut caps: BTreeMap<NodeId, crate::model::CapabilitySet> = BTreeMap::new();
    // Latest cluster size per node (self counts, so minimum 1).
    let mut cluster_size: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut registered: BTreeSet<NodeId> = BTreeSet::new();
    let mut tasks: BTreeMap<TaskId, Task> = BTreeMap::new();
    let mut dispatch_t: BTreeMap<TaskId, f64> = BTreeMap::new();
    let mut window_close_t: BTreeMap<TaskId, f64> = BTreeMap::new();
    let mut counted_accepts: BTreeMap<TaskId, usize> = BTreeMap::new();
    let mut sent: BTreeSet<(Option<Endpoint>, Vec<u8>)> = BTreeSet::new();

    // Window close times come after accepts in the trace, so collect first.
    for ev in events {
        if let TraceBody::WindowClose { task_id, .. } = &ev.body {
            window_close_t.insert(*task_id, ev.t);
        }
    }

    for (i, ev) in events.iter().enumerate() {
        if ev.t < last_t {
            violations.push(AuditViolation {
                index: i,
                description: format!("time went backwards: {} after {}", ev.t, last_t),
            });
        }
        last_t = ev.t;

        match &ev.body {
            TraceBody::Send { message } => {
                let key = serde_json::to_vec(message).unwrap();
                sent.insert((ev.from, key));
                match message {
                    Message::CapabilityDissemination {
                        sender,
                        capabilities,
                        ..
                    } => {
                        caps.insert(*sender, capabilities.clone());
                    }
                    Message::TaskAccept { leader, task_id } => {
                        let task = tasks.get(task_id);
                        match task {
                            None => violations.push(AuditViolation {
                                index: i,
                                description: format!(
                                    "TaskAccept for task {task_id} never dispatched"
                                ),
                            }),
                            Some(task) => {
                                let owned = caps.get(leader);
                                let size = cluster_size.get(leader).copied().unwrap_or(1);
                                match owned {
                                    Some(owned) if required_subset(&task.required, owned) => {}
                                    _ => violations.push(AuditViolation {
                                        index: i,
                                        description: format!(
                                            "leader {leader} accepted task {task_id} without the required capabilities"
                                        ),
                                    }),
                                }
                                if size < task.quorum {
                                    violations.push(AuditViolation {
                                        index: i,
                                        description: format!(
                                            "leader {leader} accepted task {task_id} with cluster size {size} < quorum {}",
                                            task.quorum
                                        ),
                                    });
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
            TraceBody::Deliver { message } | TraceBody::Drop { message, .. } => {
                let key = serde_json::to_vec(message).unwrap();
                if !sent.contains(&(ev.from, key)) {
                    violations.push(AuditViolation {
                        index: i,
                        description: format!(
                            "{} of a message never sent by {:?}",
                            ev.body.kind(),
                            ev.from
                        ),
                    });
                }
            }
            TraceBody::ClusterUpdate { node, members } => {
                cluster_size.insert(*node, members.len());
                if !members.contains(node) {
                    violations.push(AuditViolation {
                        index: i,
                        description: format!("node {node} missing from its own cluster"),
                    });
                }
            }
            TraceBody::LeaderRegister { leader } => {
                registered.insert(*leader);
            }
            TraceBody::TaskDispatch { task, leaders } => {
                tasks.insert(task.id, task.clone());
                dispatch_t.insert(task.id, ev.t);
                for l in leaders {
                    if !registered.contains(l) {
                        violations.push(AuditViolation {
                            index: i,
                            description: format!(
                                "task {} dispatched to unregistered leader {l}",
                                task.id
                            ),
                        });
                    }
                }
            }
            TraceBody::TaskAccept {
                task_id, counted, ..
            } => {
                if *counted {
                    *counted_accepts.entry(*task_id).or_insert(0) += 1;
                    let dispatched = dispatch_t.get(task_id);
                    let closed = window_close_t.get(task_id);
                    match (dispatched, closed) {
                        (Some(d), Some(c)) if ev.t >= *d && ev.t <= *c => {}
                        _ => violations.push(AuditViolation {
                            index: i,
                            description: format!(
                                "counted accept for task {task_id} outside its dispatch window"
                            ),
                        }),
                    }
                }
            }
            TraceBody::WindowClose {
                task_id,
                accepts,
                status,
                lat_ms,
            } => {
                let seen = counted_accepts.get(task_id).copied().unwrap_or(0);
                if seen != *accepts {
                    violations.push(AuditViolation {
                        index: i,
                        description: format!(
                            "window close for task {task_id} reports {accepts} accepts, trace has {seen}"
                        ),
                    });
                }
                let expect = if *accepts > 0 {
                    TaskStatus::Completed
                } else {
                    TaskStatus::Unallocated
                };
                if *status != expect {
                    violations.push(AuditViolation {
                        index: i,
                        description: format!(
                            "task {task_id} closed as {status:?} with {accepts} accepts"
                        ),
                    });
                }
                if lat_ms.is_some() != (*accepts > 0) {
                    violations.push(AuditViolation {
                        index: i,
                        description: format!(
                            "task {task_id}: LAT presence inconsistent with accept count"
                        ),
                    });
                }
            }
            _ => {}
        }
    }

    violations
}
