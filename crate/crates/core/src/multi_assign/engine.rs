use std::collections::HashSet;

use crate::knn_index::{SearchStats, TaskIndex};
use crate::model::{Budget, Candidate, SlotIndex, TaskId, TaskInstance, WorkerId, WorkerPool};
use crate::Result;

/// A task engine's current best move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    /// Position of the task in the input slice.
    pub pos: usize,
    pub task: TaskId,
    pub slot: SlotIndex,
    pub worker: WorkerId,
    pub cost: f64,
    pub heuristic: f64,
}

impl Proposal {
    /// Master ordering: larger heuristic, then smaller task id, then smaller slot.
    pub fn beats(&self, other: &Proposal) -> bool {
        match self.heuristic.total_cmp(&other.heuristic) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => (self.task, self.slot) < (other.task, other.slot),
        }
    }
}

/// Greedy state of one task: its instance, index, and the ranked workers per
/// slot with the claims it has been told about.
#[derive(Debug, Clone)]
pub(crate) struct TaskEngine {
    pub pos: usize,
    pub task: TaskInstance,
    index: TaskIndex,
    ranked: Vec<Vec<Candidate>>,
    next: Vec<usize>,
    claimed: HashSet<(WorkerId, usize)>,
    pub initial_gain_bound: f64,
}

impl TaskEngine {
    /// `rank_cap[j]`, when given, limits slot `j` to its `rank_cap[j]` nearest
    /// workers.
    pub fn new(
        pos: usize,
        task: &TaskInstance,
        pool: &WorkerPool,
        k: usize,
        t_s: usize,
        rank_cap: Option<&[usize]>,
    ) -> Result<Self> {
        let mut index = TaskIndex::from_task(task, k, t_s)?;
        let mut ranked = vec![Vec::new(); task.m + 1];
        for (j, r) in ranked.iter_mut().enumerate().skip(1) {
            if task.is_executed(SlotIndex(j)) {
                continue;
            }
            *r = pool.ranked_at(&task.loc, SlotIndex(j));
            if let Some(cap) = rank_cap {
                r.truncate(cap[j]);
            }
            index.set_cost(SlotIndex(j), r.first().map(|c| c.cost));
        }
        let initial_gain_bound = index.gain_upper_bound();
        Ok(TaskEngine {
            pos,
            task: task.clone(),
            index,
            ranked,
            next: vec![0; task.m + 1],
            claimed: HashSet::new(),
            initial_gain_bound,
        })
    }

    pub fn id(&self) -> TaskId {
        self.task.id
    }

    pub fn quality(&self) -> f64 {
        self.index.quality()
    }

    pub fn stats(&self) -> SearchStats {
        self.index.stats()
    }

    pub fn candidate(&self, slot: SlotIndex) -> Option<Candidate> {
        if self.task.is_executed(slot) {
            return None;
        }
        self.ranked[slot.0].get(self.next[slot.0]).copied()
    }

    pub fn propose(&mut self, budget: &Budget) -> Option<Proposal> {
        let sel = self.index.find_max_heuristic(budget)?;
        let c = self
            .candidate(sel.slot)
            .expect("indexed slot has a candidate");
        Some(Proposal {
            pos: self.pos,
            task: self.task.id,
            slot: sel.slot,
            worker: c.worker,
            cost: c.cost,
            heuristic: sel.heuristic,
        })
    }

    /// Executes `slot` with its current candidate.
    pub fn commit(&mut self, slot: SlotIndex) -> Candidate {
        let c = self
            .candidate(slot)
            .expect("committed slot has a candidate");
        self.task.execute(slot, c.worker, c.cost, c.reliability);
        self.index.execute(slot);
        self.claimed.insert((c.worker, slot.0));
        c
    }

    /// Records that `worker` was taken at `slot`. Returns true when this task's
    /// candidate at that slot was the taken worker.
    pub fn on_claim(&mut self, worker: WorkerId, slot: SlotIndex) -> bool {
        self.claimed.insert((worker, slot.0));
        if self.task.is_executed(slot) {
            return false;
        }
        let j = slot.0;
        let list = &self.ranked[j];
        let before = self.next[j];
        while self.next[j] < list.len() && self.claimed.contains(&(list[self.next[j]].worker, j)) {
            self.next[j] += 1;
        }
        if self.next[j] == before {
            return false;
        }
        let cost = self.candidate(slot).map(|c| c.cost);
        self.index.set_cost(slot, cost);
        true
    }
}
