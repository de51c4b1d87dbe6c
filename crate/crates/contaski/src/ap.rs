//! Access point state machine: leader registry, scheduled task dispatch,
//! confirmation collection and the task ledger.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::model::{NodeId, SimDuration, SimTime, Task, TaskId, TaskStatus};

/// One entry in the AP's ordered task list.
#[derive(Clone, Debug, Serialize)]
pub struct TaskEntry {
    pub task: Task,
    pub scheduled_at: SimTime,
    pub status: TaskStatus,
}

/// Ledger entry for one dispatch.
#[derive(Clone, Debug, Serialize)]
pub struct DispatchRecord {
    pub task_id: TaskId,
    pub dispatch_time: SimTime,
    /// Leader set snapshotted at dispatch time.
    pub leaders_at_dispatch: Vec<NodeId>,
    pub accepts: Vec<(NodeId, SimTime)>,
    pub final_status: TaskStatus,
    /// Last accept arrival minus dispatch time; absent when no accept
    /// arrived inside the window.
    pub lat: Option<SimDuration>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ApState {
    pub leaders: BTreeSet<NodeId>,
    pub task_list: Vec<TaskEntry>,
    pub dispatch_log: BTreeMap<TaskId, DispatchRecord>,
}

/// Result of a dispatch attempt.
#[derive(Clone, PartialEq, Debug)]
pub enum DispatchOutcome {
    /// Send `TaskDispatch` to each of these leaders and close the window
    /// after the confirmation timeout.
    Multicast { task: Task, leaders: Vec<NodeId> },
    /// No registered leaders: the task goes straight to unallocated.
    NoLeaders { task_id: TaskId },
    /// Nothing pending.
    Idle,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AcceptOutcome {
    /// Counted; `first` marks the accept that moves the task out of the
    /// pending pipeline.
    Recorded { first: bool },
    /// Arrived after the confirmation window closed.
    LateIgnored,
    UnknownTask,
}

/// Summary produced when a confirmation window closes.
#[derive(Clone, PartialEq, Debug)]
pub struct WindowSummary {
    pub task_id: TaskId,
    pub accepts: usize,
    pub status: TaskStatus,
    pub lat: Option<SimDuration>,
}

impl ApState {
    pub fn new(tasks: Vec<(Task, SimTime)>) -> Self {
        ApState {
            leaders: BTreeSet::new(),
            task_list: tasks
                .into_iter()
                .map(|(task, scheduled_at)| TaskEntry {
                    task,
                    scheduled_at,
                    status: TaskStatus::Pending,
                })
                .collect(),
            dispatch_log: BTreeMap::new(),
        }
    }

    /// Registers a leader; idempotent. Returns true when the registry grew.
    pub fn handle_leader_register(&mut self, leader: NodeId) -> bool {
        self.leaders.insert(leader)
    }

    /// Dispatches the first pending task whose scheduled time has arrived.
    pub fn dispatch_due_task(&mut self, now: SimTime) -> DispatchOutcome {
        let Some(entry) = self
            .task_list
            .iter_mut()
            .find(|e| e.status == TaskStatus::Pending && e.scheduled_at <= now)
        else {
            return DispatchOutcome::Idle;
        };
        entry.status = entry.status.transition(TaskStatus::Dispatched).unwrap();
        let task_id = entry.task.id;
        let leaders: Vec<NodeId> = self.leaders.iter().copied().collect();
        self.dispatch_log.insert(
            task_id,
            DispatchRecord {
                task_id,
                dispatch_time: now,
                leaders_at_dispatch: leaders.clone(),
                accepts: Vec::new(),
                final_status: TaskStatus::Dispatched,
                lat: None,
            },
        );
        if leaders.is_empty() {
            self.finalize(task_id, TaskStatus::Unallocated);
            DispatchOutcome::NoLeaders { task_id }
        } else {
            let task = self
                .task_list
                .iter()
                .find(|e| e.task.id == task_id)
                .unwrap()
                .task
                .clone();
            DispatchOutcome::Multicast { task, leaders }
        }
    }

    /// Records an accept arriving at `now`. Accepts are only counted while
    /// the task is still in the dispatched state.
    pub fn handle_task_accept(
        &mut self,
        leader: NodeId,
        task_id: TaskId,
        now: SimTime,
    ) -> AcceptOutcome {
        let Some(record) = self.dispatch_log.get_mut(&task_id) else {
            return AcceptOutcome::UnknownTask;
        };
        if record.final_status != TaskStatus::Dispatched {
            return AcceptOutcome::LateIgnored;
        }
        let first = record.accepts.is_empty();
        record.accepts.push((leader, now));
        AcceptOutcome::Recorded { first }
    }

    /// Closes the confirmation window: the task terminates as completed
    /// when at least one accept arrived, otherwise as unallocated. LAT is
    /// the last accept arrival minus the dispatch time.
    pub fn close_confirmation_window(&mut self, task_id: TaskId, _now: SimTime) -> WindowSummary {
        let record = &self.dispatch_log[&task_id];
        let accepts = record.accepts.len();
        let status = if accepts > 0 {
            TaskStatus::Completed
        } else {
            TaskStatus::Unallocated
        };
        let lat = record
            .accepts
            .iter()
            .map(|(_, t)| *t)
            .max()
            .map(|last| last - record.dispatch_time);
        self.finalize(task_id, status);
        let record = self.dispatch_log.get_mut(&task_id).unwrap();
        record.lat = lat;
        WindowSummary {
            task_id,
            accepts,
            status,
            lat,
        }
    }

    fn finalize(&mut self, task_id: TaskId, status: TaskStatus) {
        let entry = self
            .task_list
            .iter_mut()
            .find(|e| e.task.id == task_id)
            .unwrap();
        entry.status = entry.status.transition(status).unwrap();
        self.dispatch_log.get_mut(&task_id).unwrap().final_status = status;
    }
}
