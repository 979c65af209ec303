//! Multi-task assignment.
//!
//! MSQM maximizes the sum of task qualities under one global budget, MMQM the
//! minimum. Tasks share the worker pool: once a worker is committed at a slot,
//! other tasks fall back to their next nearest worker there.
//!
//! Engines:
//! * [`msqm_serial`]: global greedy over every task's best move.
//! * [`msqm_task_parallel`]: one engine per task on worker threads plus a
//!   master. `Deterministic` mode commits exactly what the serial engine does;
//!   `Opportunistic` mode lets engines race and arbitrates conflicts through
//!   the heartbeat table.
//! * [`msqm_group_parallel`]: independent groups of the conflict graph run
//!   the serial engine side by side, each on a share of the budget.
//! * [`mmqm_assign`]: lowest-quality task first.

mod conflict;
mod engine;
mod master;
mod mmqm;
mod oracle;
mod tables;

use serde::Serialize;

use crate::knn_index::SearchStats;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{
    AssignmentPlan, Budget, Candidate, PlanStep, SlotIndex, TaskInstance, WorkerPool,
};
use crate::quality::task_quality;
use crate::single_assign::cheapest_candidates;
use crate::{Error, Result};

pub use conflict::{build_conflict_graph, group_budgets, msqm_group_parallel, ConflictGraph};
pub use engine::Proposal;
pub use mmqm::mmqm_assign;
pub use oracle::{joint_brute_force, JOINT_CAP};
pub use tables::{ConflictRecord, Heartbeat, HeartbeatTable, LogEvent, LoggingTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ParallelMode {
    Deterministic,
    Opportunistic,
}

/// Multi-task objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Objective {
    Sum,
    Min,
}

impl Objective {
    /// Value over per-task qualities: the sum in task order, or the minimum.
    pub fn value(self, qualities: &[f64]) -> f64 {
        match self {
            Objective::Sum => qualities.iter().fold(0.0, |acc, q| acc + q),
            Objective::Min => qualities.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiOutcome {
    /// `final_quality` is the objective of the engine that produced it.
    pub plan: AssignmentPlan,
    /// Quality per task after the plan, in input order.
    pub qualities: Vec<f64>,
    pub conflicts: Vec<ConflictRecord>,
    pub heartbeats: HeartbeatTable,
    pub log: LoggingTable,
    pub stats: SearchStats,
    /// True when a single (task, slot) commit beat the greedy sequence.
    pub used_single: bool,
}

impl MultiOutcome {
    pub(crate) fn empty(tasks: &[TaskInstance]) -> Self {
        let ids: Vec<_> = tasks.iter().map(|t| t.id).collect();
        MultiOutcome {
            plan: AssignmentPlan::default(),
            qualities: vec![0.0; tasks.len()],
            conflicts: Vec::new(),
            heartbeats: HeartbeatTable::new(&ids),
            log: LoggingTable::default(),
            stats: SearchStats::default(),
            used_single: false,
        }
    }

    pub fn q_sum(&self) -> f64 {
        Objective::Sum.value(&self.qualities)
    }

    pub fn q_min(&self) -> f64 {
        Objective::Min.value(&self.qualities)
    }
}

/// Sum of task qualities, in task order.
pub fn q_sum(tasks: &[TaskInstance], k: usize) -> f64 {
    tasks.iter().fold(0.0, |acc, t| acc + task_quality(t, k))
}

/// Minimum task quality; fails on an empty set.
pub fn q_min(tasks: &[TaskInstance], k: usize) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::EmptyTaskSet);
    }
    Ok(tasks
        .iter()
        .map(|t| task_quality(t, k))
        .fold(f64::INFINITY, f64::min))
}

pub fn msqm_serial(
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    budget: f64,
    k: usize,
    t_s: usize,
) -> Result<MultiOutcome> {
    let engines = master::build_engines(tasks, pool, k, t_s, None)?;
    Ok(master::serial_outcome(tasks, pool, budget, k, engines))
}

/// Task engines on `cores` threads under one master. With one core both modes
/// run the deterministic protocol, which equals [`msqm_serial`].
pub fn msqm_task_parallel(
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    budget: f64,
    k: usize,
    t_s: usize,
    cores: usize,
    mode: ParallelMode,
) -> Result<MultiOutcome> {
    let engines = master::build_engines(tasks, pool, k, t_s, None)?;
    Ok(master::task_parallel(
        tasks, pool, budget, k, engines, cores, mode,
    ))
}

/// Baseline: uniformly random affordable (task, slot) pairs, each given the
/// nearest worker still free at that slot, until nothing is affordable.
pub fn random_multi_assign(
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    budget: f64,
    k: usize,
    seed: u64,
) -> MultiOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = pool.clone();
    let mut ts = tasks.to_vec();
    let mut cands: Vec<Vec<Option<Candidate>>> =
        ts.iter().map(|t| cheapest_candidates(t, &pool)).collect();
    let mut b = Budget::new(budget);
    let mut out = MultiOutcome::empty(tasks);
    loop {
        let open: Vec<(usize, usize)> = cands
            .iter()
            .enumerate()
            .flat_map(|(i, cs)| {
                cs.iter()
                    .enumerate()
                    .filter(|(_, c)| c.is_some_and(|c| b.affords(c.cost)))
                    .map(move |(j, _)| (i, j))
            })
            .collect();
        let Some(&(i, j)) = open.choose(&mut rng) else {
            break;
        };
        let c = cands[i][j].take().expect("candidate");
        let slot = SlotIndex(j);
        b.charge(c.cost);
        ts[i].execute(slot, c.worker, c.cost, c.reliability);
        pool.claim(c.worker, slot);
        for (x, cs) in cands.iter_mut().enumerate() {
            if x != i && cs[j].is_some_and(|o| o.worker == c.worker) {
                cs[j] = pool.ranked_at(&ts[x].loc, slot).first().copied();
            }
        }
        out.plan.steps.push(PlanStep {
            task: ts[i].id,
            slot,
            worker: c.worker,
            cost: c.cost,
        });
    }
    out.qualities = ts.iter().map(|t| task_quality(t, k)).collect();
    out.plan.spent = out.plan.recomputed_spent();
    out.plan.final_quality = out.q_sum();
    out
}
