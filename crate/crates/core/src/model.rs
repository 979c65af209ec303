//! Domain types shared by every engine: tasks, workers, budgets, plans and the
//! distance-based cost model.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Smallest slot count accepted by validation. Below three slots the entropy
/// terms are no longer guaranteed to be monotone in the finishing probability.
pub const MIN_SLOTS: usize = 3;

/// Cost floor used when a cost appears in a denominator. Charged costs are
/// never clamped.
pub const COST_EPSILON: f64 = 1e-9;

pub type TaskId = u32;
pub type WorkerId = u32;

/// 1-based position of a subtask on the task timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotIndex(pub usize);

impl SlotIndex {
    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for SlotIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Number of slots between two subtasks of the same task.
pub fn slot_distance(a: SlotIndex, b: SlotIndex) -> usize {
    a.0.abs_diff(b.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SlotState {
    Null,
    Executed {
        worker: WorkerId,
        cost: f64,
        reliability: f64,
    },
}

impl SlotState {
    pub fn is_executed(&self) -> bool {
        matches!(self, SlotState::Executed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: TaskId,
    pub loc: Point,
    pub m: usize,
    /// `states[j - 1]` holds the state of slot `j`.
    pub states: Vec<SlotState>,
    pub reliability_mode: bool,
}

impl TaskInstance {
    /// A task with every slot still unexecuted.
    pub fn new(id: TaskId, loc: Point, m: usize) -> Self {
        TaskInstance {
            id,
            loc,
            m,
            states: vec![SlotState::Null; m],
            reliability_mode: false,
        }
    }

    pub fn with_reliability(mut self, on: bool) -> Self {
        self.reliability_mode = on;
        self
    }

    pub fn state(&self, slot: SlotIndex) -> &SlotState {
        &self.states[slot.0 - 1]
    }

    pub fn is_executed(&self, slot: SlotIndex) -> bool {
        self.state(slot).is_executed()
    }

    /// Marks `slot` executed by `worker`. Used by engines and tests to set up
    /// task states; it does not touch any pool.
    pub fn execute(&mut self, slot: SlotIndex, worker: WorkerId, cost: f64, reliability: f64) {
        self.states[slot.0 - 1] = SlotState::Executed {
            worker,
            cost,
            reliability,
        };
    }

    /// Executed slots in ascending order.
    pub fn executed_slots(&self) -> Vec<usize> {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_executed())
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Sum of all committed subtask costs.
    pub fn cost(&self) -> f64 {
        self.states
            .iter()
            .map(|s| match s {
                SlotState::Executed { cost, .. } => *cost,
                SlotState::Null => 0.0,
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Worker {
    pub id: WorkerId,
    pub slot: SlotIndex,
    pub pos: Point,
    pub reliability: f64,
}

impl Worker {
    pub fn new(id: WorkerId, slot: usize, pos: Point) -> Self {
        Worker {
            id,
            slot: SlotIndex(slot),
            pos,
            reliability: 1.0,
        }
    }
}

/// Workers registered per slot, plus the ledger of `(worker, slot)` pairs
/// already handed to some task.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkerPool {
    pub by_slot: BTreeMap<usize, Vec<Worker>>,
    pub claimed: HashSet<(WorkerId, usize)>,
}

/// A priced worker for one subtask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub worker: WorkerId,
    pub cost: f64,
    pub reliability: f64,
}

impl WorkerPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_workers(workers: impl IntoIterator<Item = Worker>) -> Self {
        let mut pool = Self::new();
        for w in workers {
            pool.register(w);
        }
        pool
    }

    /// Registers without checking for duplicates; `validate_instance` reports
    /// them.
    pub fn register(&mut self, worker: Worker) {
        self.by_slot.entry(worker.slot.0).or_default().push(worker);
    }

    pub fn workers_at(&self, slot: SlotIndex) -> &[Worker] {
        self.by_slot.get(&slot.0).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_claimed(&self, worker: WorkerId, slot: SlotIndex) -> bool {
        self.claimed.contains(&(worker, slot.0))
    }

    /// Returns false if the pair was already claimed.
    pub fn claim(&mut self, worker: WorkerId, slot: SlotIndex) -> bool {
        self.claimed.insert((worker, slot.0))
    }

    pub fn len(&self) -> usize {
        self.by_slot.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Worker> {
        self.by_slot.values().flatten()
    }

    /// Unclaimed workers at `slot` ordered by distance to `loc`, ties broken by
    /// worker id.
    pub fn ranked_at(&self, loc: &Point, slot: SlotIndex) -> Vec<Candidate> {
        let mut ranked: Vec<Candidate> = self
            .workers_at(slot)
            .iter()
            .filter(|w| !self.is_claimed(w.id, slot))
            .map(|w| Candidate {
                worker: w.id,
                cost: loc.distance(&w.pos),
                reliability: w.reliability,
            })
            .collect();
        ranked.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.worker.cmp(&b.worker)));
        ranked
    }
}

/// The `rank`-th cheapest unclaimed worker for `task` at `slot`, or `None` when
/// fewer than `rank` unclaimed workers are available.
pub fn candidate_cost(
    task: &TaskInstance,
    slot: SlotIndex,
    pool: &WorkerPool,
    rank: usize,
) -> Option<Candidate> {
    assert!(rank >= 1, "rank is 1-based");
    pool.ranked_at(&task.loc, slot).get(rank - 1).copied()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub total: f64,
    pub spent: f64,
}

impl Budget {
    pub fn new(total: f64) -> Self {
        Budget { total, spent: 0.0 }
    }

    pub fn remaining(&self) -> f64 {
        self.total - self.spent
    }

    /// Affordability is decided on the accumulated sum so that a successful
    /// check always keeps `spent <= total`.
    pub fn affords(&self, cost: f64) -> bool {
        self.spent + cost <= self.total
    }

    pub fn charge(&mut self, cost: f64) {
        debug_assert!(self.affords(cost));
        self.spent += cost;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub task: TaskId,
    pub slot: SlotIndex,
    pub worker: WorkerId,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub steps: Vec<PlanStep>,
    pub final_quality: f64,
    pub spent: f64,
}

impl AssignmentPlan {
    /// Spent budget recomputed from the steps in commit order.
    pub fn recomputed_spent(&self) -> f64 {
        self.steps.iter().fold(0.0, |acc, s| acc + s.cost)
    }

    /// True when no `(worker, slot)` pair is used twice.
    pub fn has_unique_claims(&self) -> bool {
        let mut seen = HashSet::new();
        self.steps.iter().all(|s| seen.insert((s.worker, s.slot.0)))
    }

    /// Replays the plan onto fresh task states. Reliability values are looked
    /// up in `pool`.
    pub fn apply(&self, tasks: &mut [TaskInstance], pool: &WorkerPool) {
        for step in &self.steps {
            let reliability = pool
                .workers_at(step.slot)
                .iter()
                .find(|w| w.id == step.worker)
                .map(|w| w.reliability)
                .unwrap_or(1.0);
            if let Some(task) = tasks.iter_mut().find(|t| t.id == step.task) {
                task.execute(step.slot, step.worker, step.cost, reliability);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SlotsBelowMinimum {
        task: TaskId,
        m: usize,
    },
    StateLength {
        task: TaskId,
        expected: usize,
        found: usize,
    },
    DuplicateTask {
        task: TaskId,
    },
    UnknownExecutor {
        task: TaskId,
        slot: usize,
        worker: WorkerId,
    },
    SlotOutOfRange {
        worker: WorkerId,
        slot: usize,
        m: usize,
    },
    DuplicateRegistration {
        worker: WorkerId,
        slot: usize,
    },
    ReliabilityOutOfRange {
        worker: WorkerId,
        slot: usize,
    },
    ClaimNotRegistered {
        worker: WorkerId,
        slot: usize,
    },
    NegativeBudget,
    Overspent,
    NonFinite {
        what: &'static str,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SlotsBelowMinimum { task, m } => {
                write!(f, "task {task}: m below minimum ({m} < {MIN_SLOTS})")
            }
            Violation::StateLength {
                task,
                expected,
                found,
            } => write!(f, "task {task}: {found} slot states for m = {expected}"),
            Violation::DuplicateTask { task } => write!(f, "task {task} defined twice"),
            Violation::UnknownExecutor { task, slot, worker } => write!(
                f,
                "task {task}: slot {slot} executed by worker {worker} who is not available there"
            ),
            Violation::SlotOutOfRange { worker, slot, m } => {
                write!(f, "worker {worker}: slot {slot} outside [1, {m}]")
            }
            Violation::DuplicateRegistration { worker, slot } => {
                write!(f, "worker {worker} registered twice at slot {slot}")
            }
            Violation::ReliabilityOutOfRange { worker, slot } => {
                write!(
                    f,
                    "worker {worker} at slot {slot}: reliability outside [0, 1]"
                )
            }
            Violation::ClaimNotRegistered { worker, slot } => {
                write!(f, "claim ({worker}, {slot}) has no registration")
            }
            Violation::NegativeBudget => write!(f, "budget is negative"),
            Violation::Overspent => write!(f, "spent exceeds total budget"),
            Violation::NonFinite { what } => write!(f, "non-finite {what}"),
        }
    }
}

/// Checks every instance invariant and returns all violations found.
pub fn validate_instance(
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    budget: &Budget,
) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let max_m = tasks.iter().map(|t| t.m).max();

    let mut task_ids = HashSet::new();
    for t in tasks {
        if !task_ids.insert(t.id) {
            out.push(Violation::DuplicateTask { task: t.id });
        }
        if t.m < MIN_SLOTS {
            out.push(Violation::SlotsBelowMinimum { task: t.id, m: t.m });
        }
        if t.states.len() != t.m {
            out.push(Violation::StateLength {
                task: t.id,
                expected: t.m,
                found: t.states.len(),
            });
        }
        if !(t.loc.x.is_finite() && t.loc.y.is_finite()) {
            out.push(Violation::NonFinite {
                what: "task location",
            });
        }
        for (i, s) in t.states.iter().enumerate() {
            if let SlotState::Executed { worker, .. } = s {
                let slot = SlotIndex(i + 1);
                if !pool.workers_at(slot).iter().any(|w| w.id == *worker) {
                    out.push(Violation::UnknownExecutor {
                        task: t.id,
                        slot: slot.0,
                        worker: *worker,
                    });
                }
            }
        }
    }

    let mut registered = HashSet::new();
    for w in pool.iter() {
        if !registered.insert((w.id, w.slot.0)) {
            out.push(Violation::DuplicateRegistration {
                worker: w.id,
                slot: w.slot.0,
            });
        }
        if let Some(m) = max_m {
            if w.slot.0 < 1 || w.slot.0 > m {
                out.push(Violation::SlotOutOfRange {
                    worker: w.id,
                    slot: w.slot.0,
                    m,
                });
            }
        } else if w.slot.0 < 1 {
            out.push(Violation::SlotOutOfRange {
                worker: w.id,
                slot: w.slot.0,
                m: 0,
            });
        }
        if !(0.0..=1.0).contains(&w.reliability) {
            out.push(Violation::ReliabilityOutOfRange {
                worker: w.id,
                slot: w.slot.0,
            });
        }
        if !(w.pos.x.is_finite() && w.pos.y.is_finite()) {
            out.push(Violation::NonFinite {
                what: "worker position",
            });
        }
    }
    let mut claims: Vec<_> = pool.claimed.iter().copied().collect();
    claims.sort_unstable();
    for (worker, slot) in claims {
        if !registered.contains(&(worker, slot)) {
            out.push(Violation::ClaimNotRegistered { worker, slot });
        }
    }

    if !budget.total.is_finite() || !budget.spent.is_finite() {
        out.push(Violation::NonFinite { what: "budget" });
    }
    if budget.total < 0.0 || budget.spent < 0.0 {
        out.push(Violation::NegativeBudget);
    }
    if budget.spent > budget.total {
        out.push(Violation::Overspent);
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool_with(workers: &[(WorkerId, usize, f64, f64)]) -> WorkerPool {
        WorkerPool::from_workers(
            workers
                .iter()
                .map(|&(id, slot, x, y)| Worker::new(id, slot, Point::new(x, y))),
        )
    }

    #[test]
    fn slot_distance_examples() {
        assert_eq!(slot_distance(SlotIndex(1), SlotIndex(2)), 1);
        assert_eq!(slot_distance(SlotIndex(2), SlotIndex(4)), 2);
        assert_eq!(slot_distance(SlotIndex(5), SlotIndex(5)), 0);
        assert_eq!(slot_distance(SlotIndex(4), SlotIndex(2)), 2);
    }

    #[test]
    fn candidate_cost_empty_slot_is_unavailable() {
        let task = TaskInstance::new(0, Point::new(0.0, 0.0), 5);
        let pool = pool_with(&[(1, 2, 1.0, 0.0)]);
        assert!(candidate_cost(&task, SlotIndex(1), &pool, 1).is_none());
    }

    #[test]
    fn candidate_cost_colocated_worker_costs_zero() {
        let task = TaskInstance::new(0, Point::new(3.0, 4.0), 5);
        let pool = pool_with(&[(1, 2, 3.0, 4.0)]);
        let c = candidate_cost(&task, SlotIndex(2), &pool, 1).unwrap();
        assert_eq!(c.cost, 0.0);
    }

    #[test]
    fn candidate_cost_rank_two() {
        let task = TaskInstance::new(0, Point::new(0.0, 0.0), 5);
        let pool = pool_with(&[(1, 3, 5.0, 0.0), (2, 3, 0.0, 2.0), (3, 3, 9.0, 0.0)]);
        // oracle: distances sorted {2, 5, 9}
        let c = candidate_cost(&task, SlotIndex(3), &pool, 2).unwrap();
        assert_eq!((c.worker, c.cost), (1, 5.0));
        assert!(candidate_cost(&task, SlotIndex(3), &pool, 4).is_none());
    }

    #[test]
    fn candidate_cost_skips_claimed() {
        let task = TaskInstance::new(0, Point::new(0.0, 0.0), 5);
        let mut pool = pool_with(&[(1, 3, 5.0, 0.0), (2, 3, 0.0, 2.0)]);
        pool.claim(2, SlotIndex(3));
        let c = candidate_cost(&task, SlotIndex(3), &pool, 1).unwrap();
        assert_eq!(c.worker, 1);
    }

    #[test]
    fn validation_accepts_well_formed() {
        let tasks = vec![TaskInstance::new(0, Point::new(0.0, 0.0), 5)];
        let pool = pool_with(&[(1, 3, 5.0, 0.0)]);
        assert!(validate_instance(&tasks, &pool, &Budget::new(10.0)).is_ok());
    }

    #[test]
    fn validation_reports_every_violation() {
        let tasks = vec![TaskInstance::new(0, Point::new(0.0, 0.0), 2)];
        let pool = pool_with(&[(1, 1, 5.0, 0.0), (1, 1, 6.0, 0.0)]);
        let errs = validate_instance(&tasks, &pool, &Budget::new(10.0)).unwrap_err();
        assert!(errs.contains(&Violation::SlotsBelowMinimum { task: 0, m: 2 }));
        assert!(errs.contains(&Violation::DuplicateRegistration { worker: 1, slot: 1 }));
        assert!(errs
            .iter()
            .any(|v| v.to_string().contains("m below minimum")));
    }

    #[test]
    fn plan_spent_and_claims() {
        let plan = AssignmentPlan {
            steps: vec![
                PlanStep {
                    task: 0,
                    slot: SlotIndex(1),
                    worker: 4,
                    cost: 1.5,
                },
                PlanStep {
                    task: 1,
                    slot: SlotIndex(1),
                    worker: 4,
                    cost: 2.0,
                },
            ],
            final_quality: 0.0,
            spent: 3.5,
        };
        assert_eq!(plan.recomputed_spent(), plan.spent);
        assert!(!plan.has_unique_claims());
    }

    #[test]
    fn budget_affordability_keeps_invariant() {
        let mut b = Budget::new(1.0);
        assert!(b.affords(0.7));
        b.charge(0.7);
        assert!(!b.affords(0.31));
        assert!(b.affords(0.29));
        assert!(b.spent <= b.total);
    }
}
