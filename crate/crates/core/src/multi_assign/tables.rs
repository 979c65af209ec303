use std::collections::BTreeSet;

use serde::Serialize;

use crate::model::{PlanStep, SlotIndex, TaskId, WorkerId};

/// Tasks that wanted the same worker at one slot, and the worker rank the
/// losers compete at next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConflictRecord {
    pub tasks: BTreeSet<TaskId>,
    pub slot: SlotIndex,
    pub knn_rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Heartbeat {
    /// Latest reported heuristic; negative infinity once the task has nothing
    /// affordable left.
    pub heuristic: f64,
    pub iteration: usize,
    pub target: Option<(WorkerId, SlotIndex)>,
}

/// Latest report of every task engine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeartbeatTable {
    pub entries: Vec<(TaskId, Heartbeat)>,
}

impl HeartbeatTable {
    pub fn new(tasks: &[TaskId]) -> Self {
        HeartbeatTable {
            entries: tasks
                .iter()
                .map(|&t| {
                    (
                        t,
                        Heartbeat {
                            heuristic: f64::INFINITY,
                            iteration: 0,
                            target: None,
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn get(&self, pos: usize) -> &Heartbeat {
        &self.entries[pos].1
    }

    /// Stores a report and returns the updated entry.
    pub fn report(
        &mut self,
        pos: usize,
        heuristic: f64,
        target: Option<(WorkerId, SlotIndex)>,
    ) -> Heartbeat {
        let hb = &mut self.entries[pos].1;
        hb.heuristic = heuristic;
        hb.iteration += 1;
        hb.target = target;
        *hb
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LogEvent {
    Heartbeat { task: TaskId, beat: Heartbeat },
    Conflict(ConflictRecord),
    Commit(PlanStep),
}

/// Append-only history of the master.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoggingTable {
    events: Vec<LogEvent>,
}

impl LoggingTable {
    pub fn push(&mut self, event: LogEvent) {
        self.events.push(event);
    }

    pub fn extend(&mut self, other: LoggingTable) {
        self.events.extend(other.events);
    }

    pub fn events(&self) -> &[LogEvent] {
        &self.events
    }

    /// Commits in the order they happened.
    pub fn replay(&self) -> Vec<PlanStep> {
        self.events
            .iter()
            .filter_map(|e| match e {
                LogEvent::Commit(s) => Some(*s),
                _ => None,
            })
            .collect()
    }

    pub fn conflict_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, LogEvent::Conflict(_)))
            .count()
    }

    /// Text dump, one event per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let line = match e {
                LogEvent::Heartbeat { task, beat } => {
                    format!("heartbeat,{},{},{}", task, beat.iteration, beat.heuristic)
                }
                LogEvent::Conflict(c) => format!(
                    "conflict,{},{},{}",
                    c.slot.0,
                    c.knn_rank,
                    c.tasks
                        .iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>()
                        .join(" ")
                ),
                LogEvent::Commit(s) => {
                    format!("commit,{},{},{},{}", s.task, s.slot.0, s.worker, s.cost)
                }
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}
