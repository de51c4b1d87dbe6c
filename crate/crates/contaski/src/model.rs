//! Domain types shared by the protocol state machines, the simulator and the
//! metrics layer. Everything here is an immutable value type.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A sensing function a node can perform, identified by name within the
/// scenario's capability universe.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Capability(pub String);

impl Capability {
    pub fn new(name: impl Into<String>) -> Self {
        Capability(name.into())
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The default seven-capability universe used when a scenario does not
/// declare its own.
pub const DEFAULT_UNIVERSE: [&str; 7] = [
    "temperature",
    "humidity",
    "presence",
    "light",
    "machine-status",
    "pressure",
    "reservoir-level",
];

/// Finite, duplicate-free set of capabilities. Kept ordered so that
/// serialization and iteration are deterministic.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CapabilitySet(BTreeSet<Capability>);

impl CapabilitySet {
    pub fn new() -> Self {
        CapabilitySet(BTreeSet::new())
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        CapabilitySet(names.into_iter().map(Capability::new).collect())
    }

    pub fn insert(&mut self, cap: Capability) -> bool {
        self.0.insert(cap)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, cap: &Capability) -> bool {
        self.0.contains(cap)
    }

    pub fn is_subset(&self, other: &CapabilitySet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn intersection_len(&self, other: &CapabilitySet) -> usize {
        self.0.intersection(&other.0).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Capability> {
        self.0.iter()
    }
}

impl FromIterator<Capability> for CapabilitySet {
    fn from_iter<I: IntoIterator<Item = Capability>>(iter: I) -> Self {
        CapabilitySet(iter.into_iter().collect())
    }
}

/// Unique node identifier. The total order on ids is the tie-breaking
/// authority everywhere a tie can occur.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Planar position in meters.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Simulated time, in nanoseconds since the start of the run. Integer
/// arithmetic keeps the event order exactly reproducible.
#[derive(
    Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime((secs * 1e9).round() as u64)
    }

    pub fn from_millis_f64(ms: f64) -> Self {
        SimTime((ms * 1e6).round() as u64)
    }

    pub fn as_secs_f64(&self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn as_millis_f64(&self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl std::ops::Add<SimDuration> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl std::ops::Sub<SimTime> for SimTime {
    type Output = SimDuration;
    fn sub(self, rhs: SimTime) -> SimDuration {
        SimDuration(self.0 - rhs.0)
    }
}

/// Span of simulated time, in nanoseconds.
#[derive(
    Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimDuration(pub u64);

impl SimDuration {
    pub fn from_secs_f64(secs: f64) -> Self {
        SimDuration((secs * 1e9).round() as u64)
    }

    pub fn from_millis_f64(ms: f64) -> Self {
        SimDuration((ms * 1e6).round() as u64)
    }

    pub fn as_secs_f64(&self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn as_millis_f64(&self) -> f64 {
        self.0 as f64 / 1e6
    }
}

/// Unique task identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u64);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A sensing demand: the capabilities required to perform it, how long it
/// runs, and the minimum cluster size a leader needs to accept it.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub required: CapabilitySet,
    pub duration: SimDuration,
    pub quorum: usize,
}

/// Life cycle of a task as tracked by the access point.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Dispatched,
    Completed,
    /// Terminal state for a dispatch that received zero accepts within the
    /// confirmation window.
    Unallocated,
}

impl TaskStatus {
    /// The only legal transitions are pending→dispatched,
    /// dispatched→completed and dispatched→unallocated.
    pub fn can_transition(self, to: TaskStatus) -> bool {
        use TaskStatus::*;
        matches!(
            (self, to),
            (Pending, Dispatched) | (Dispatched, Completed) | (Dispatched, Unallocated)
        )
    }

    pub fn transition(self, to: TaskStatus) -> Result<TaskStatus, IllegalTransition> {
        if self.can_transition(to) {
            Ok(to)
        } else {
            Err(IllegalTransition { from: self, to })
        }
    }

    pub const ALL: [TaskStatus; 4] = [
        TaskStatus::Pending,
        TaskStatus::Dispatched,
        TaskStatus::Completed,
        TaskStatus::Unallocated,
    ];
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, thiserror::Error)]
#[error("illegal task status transition {from:?} -> {to:?}")]
pub struct IllegalTransition {
    pub from: TaskStatus,
    pub to: TaskStatus,
}

/// The five protocol messages.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    CapabilityDissemination {
        sender: NodeId,
        capabilities: CapabilitySet,
        neigh_count: usize,
    },
    LeaderRegister {
        leader: NodeId,
    },
    TaskDispatch {
        task: Task,
    },
    TaskAccept {
        leader: NodeId,
        task_id: TaskId,
    },
    LeaderToCluster {
        task_id: TaskId,
        duration: SimDuration,
    },
}

/// What a node remembers about one neighbor: its last announced capability
/// set and neighborhood size, plus the similarity against our own set.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct NeighborRecord {
    pub id: NodeId,
    pub capabilities: CapabilitySet,
    pub neigh_count: usize,
    pub similarity: f64,
}
