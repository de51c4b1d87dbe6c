//! Per-node protocol state machine: capability dissemination, neighbor
//! tracking, cluster construction, leader selection and the leader side of
//! task allocation.
//!
//! Every operation is a pure transition `(state, input) -> effects`; the
//! event engine owns the state and interprets the effects.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{
    CapabilitySet, Message, NeighborRecord, NodeId, Position, SimDuration, SimTime, Task, TaskId,
};
use crate::similarity::{capability_similarity, is_similar, required_subset, SimilarityThreshold};

#[derive(Clone, Debug)]
pub struct NodeState {
    pub id: NodeId,
    pub capabilities: CapabilitySet,
    pub position: Position,
    pub neighbors: BTreeMap<NodeId, NeighborRecord>,
    /// Local cluster view; always contains self.
    pub cluster: BTreeSet<NodeId>,
    pub leader: Option<NodeId>,
    pub registered: bool,
    /// Task id -> scheduled completion time.
    pub running_tasks: BTreeMap<TaskId, SimTime>,
    /// Set once the end-of-warmup evaluation timer has fired; leader
    /// registration is deferred until then so early, empty neighborhood
    /// views do not register spurious leaders.
    eval_enabled: bool,
}

/// Side effects requested by a state transition.
#[derive(Clone, PartialEq, Debug)]
pub enum NodeEffect {
    Broadcast(Message),
    SendToAp(Message),
    ClusterChanged(Vec<NodeId>),
    LeaderChanged(NodeId),
    TaskStarted {
        task_id: TaskId,
        complete_at: SimTime,
    },
    ProtocolViolation(String),
}

impl NodeState {
    pub fn new(id: NodeId, capabilities: CapabilitySet, position: Position) -> Self {
        let mut cluster = BTreeSet::new();
        cluster.insert(id);
        NodeState {
            id,
            capabilities,
            position,
            neighbors: BTreeMap::new(),
            cluster,
            leader: None,
            registered: false,
            running_tasks: BTreeMap::new(),
            eval_enabled: false,
        }
    }

    /// The broadcast announcing this node's id, capabilities and current
    /// neighborhood size.
    pub fn capability_message(&self) -> Message {
        Message::CapabilityDissemination {
            sender: self.id,
            capabilities: self.capabilities.clone(),
            neigh_count: self.neighbors.len(),
        }
    }

    /// Upserts the sender's neighbor record, refreshes cluster membership
    /// from the recomputed similarity, and re-evaluates the leader.
    pub fn handle_capability_message(
        &mut self,
        sender: NodeId,
        capabilities: &CapabilitySet,
        neigh_count: usize,
        threshold: SimilarityThreshold,
    ) -> Vec<NodeEffect> {
        debug_assert_ne!(sender, self.id, "channel never delivers self-messages");
        let similarity = capability_similarity(&self.capabilities, capabilities)
            .expect("deployed nodes have non-empty capability sets");
        self.neighbors.insert(
            sender,
            NeighborRecord {
                id: sender,
                capabilities: capabilities.clone(),
                neigh_count,
                similarity,
            },
        );

        let mut effects = Vec::new();
        let similar = is_similar(&self.capabilities, capabilities, threshold).unwrap();
        let changed = if similar {
            self.cluster.insert(sender)
        } else {
            self.cluster.remove(&sender)
        };
        if changed {
            effects.push(NodeEffect::ClusterChanged(
                self.cluster.iter().copied().collect(),
            ));
        }
        effects.extend(self.select_leader());
        effects
    }

    /// Picks the leader: the candidate with the largest announced
    /// neighborhood among self and the cluster members, ties broken by
    /// lowest id. Registers with the AP when self wins after the
    /// evaluation timer has fired.
    pub fn select_leader(&mut self) -> Vec<NodeEffect> {
        // (count, id) with count descending, id ascending.
        let mut best = (self.neighbors.len(), self.id);
        for member in &self.cluster {
            if *member == self.id {
                continue;
            }
            let record = &self.neighbors[member];
            if record.neigh_count > best.0 || (record.neigh_count == best.0 && *member < best.1) {
                best = (record.neigh_count, *member);
            }
        }

        let mut effects = Vec::new();
        if self.leader != Some(best.1) {
            self.leader = Some(best.1);
            effects.push(NodeEffect::LeaderChanged(best.1));
        }
        if self.eval_enabled && self.leader == Some(self.id) && !self.registered {
            self.registered = true;
            effects.push(NodeEffect::SendToAp(Message::LeaderRegister {
                leader: self.id,
            }));
        }
        effects
    }

    /// End-of-warmup evaluation: from here on a self-leader registers with
    /// the AP.
    pub fn enable_leader_evaluation(&mut self) -> Vec<NodeEffect> {
        self.eval_enabled = true;
        self.select_leader()
    }

    /// Leader-side receipt of a dispatched task. Accepts iff the required
    /// capabilities are owned and the cluster meets the quorum; otherwise
    /// stays silent. The leader executes the task alongside its members.
    pub fn handle_task_dispatch(&mut self, task: &Task, now: SimTime) -> Vec<NodeEffect> {
        if self.leader != Some(self.id) {
            return vec![NodeEffect::ProtocolViolation(format!(
                "node {} received TaskDispatch for task {} but is not a leader",
                self.id, task.id
            ))];
        }
        let apt = required_subset(&task.required, &self.capabilities)
            && self.cluster.len() >= task.quorum;
        if !apt {
            return Vec::new();
        }
        let mut effects = vec![
            NodeEffect::SendToAp(Message::TaskAccept {
                leader: self.id,
                task_id: task.id,
            }),
            NodeEffect::Broadcast(Message::LeaderToCluster {
                task_id: task.id,
                duration: task.duration,
            }),
        ];
        effects.extend(self.start_task(task.id, task.duration, now));
        effects
    }

    /// Member-side receipt of a task disseminated by the cluster leader.
    pub fn handle_leader_to_cluster(
        &mut self,
        sender: NodeId,
        task_id: TaskId,
        duration: SimDuration,
        now: SimTime,
    ) -> Vec<NodeEffect> {
        if self.leader != Some(sender) {
            return vec![NodeEffect::ProtocolViolation(format!(
                "node {} ignored LeaderToCluster for task {task_id} from non-leader {sender}",
                self.id
            ))];
        }
        self.start_task(task_id, duration, now)
    }

    fn start_task(&mut self, task_id: TaskId, duration: SimDuration, now: SimTime) -> Vec<NodeEffect> {
        if self.running_tasks.contains_key(&task_id) {
            return Vec::new();
        }
        let complete_at = now + duration;
        self.running_tasks.insert(task_id, complete_at);
        vec![NodeEffect::TaskStarted {
            task_id,
            complete_at,
        }]
    }

    pub fn complete_task(&mut self, task_id: TaskId) {
        self.running_tasks.remove(&task_id);
    }
}
