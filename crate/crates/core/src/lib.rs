//! Quality-aware task assignment for time-continuous spatial crowdsourcing.
//!
//! A task spans `m` time slots at one location. Each slot can be probed by a
//! worker who is available at that slot, at a cost equal to the worker's
//! distance from the task. Unprobed slots are interpolated from their `k`
//! nearest probed slots, and the quality of a task is the entropy of the
//! per-slot finishing probabilities. The crate maximizes that quality under a
//! budget:
//!
//! * [`single_assign`] holds the cost-benefit greedy in a plain form and in an
//!   index-accelerated form, plus exhaustive and random baselines.
//! * [`knn_index`] is the aggregated binary tree over 1-D order-k Voronoi
//!   cells that drives the accelerated greedy.
//! * [`multi_assign`] covers multi-task objectives (sum and minimum of task
//!   qualities) with serial, group-parallel and task-parallel engines.
//! * [`harness`] generates synthetic instances, reads and writes the text
//!   formats, runs benchmarks and implements the `tcsc` command line.

pub mod harness;
pub mod knn_index;
pub mod model;
pub mod multi_assign;
pub mod quality;
pub mod single_assign;

pub use model::{
    AssignmentPlan, Budget, Candidate, PlanStep, Point, SlotIndex, SlotState, TaskId, TaskInstance,
    Worker, WorkerId, WorkerPool,
};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("instance too large for exhaustive search: {candidates} candidate slots (cap {cap})")]
    InstanceTooLarge { candidates: usize, cap: usize },
    #[error("invalid quality weights ({spatial}, {temporal}): both in [0, 1] and summing to 1")]
    InvalidWeights { spatial: f64, temporal: f64 },
    #[error("domain size must be positive, got {0}")]
    InvalidDomain(f64),
    #[error("invalid instance: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<model::Violation>),
    #[error("the indexed engine does not support reliability-weighted quality")]
    ReliabilityUnsupported,
    #[error("{0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("empty task set")]
    EmptyTaskSet,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
