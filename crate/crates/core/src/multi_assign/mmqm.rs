use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::master::{build_engines, finalize, MasterState};
use super::tables::LogEvent;
use super::{MultiOutcome, Objective};
use crate::model::{Budget, PlanStep, TaskId, TaskInstance, WorkerPool};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Entry {
    quality: f64,
    task: TaskId,
    pos: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.quality
            .total_cmp(&other.quality)
            .then(self.task.cmp(&other.task))
    }
}

/// Max-min assignment: the task with the lowest quality takes one greedy step
/// at a time. A task with nothing affordable left is dropped.
pub fn mmqm_assign(
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    budget: f64,
    k: usize,
    t_s: usize,
) -> Result<MultiOutcome> {
    if tasks.is_empty() {
        return Err(Error::EmptyTaskSet);
    }
    let mut engines = build_engines(tasks, pool, k, t_s, None)?;
    let ids: Vec<TaskId> = tasks.iter().map(|t| t.id).collect();
    let bounds: Vec<f64> = engines.iter().map(|e| e.initial_gain_bound).collect();
    let mut state = MasterState::new(&ids);
    let mut b = Budget::new(budget);
    let mut heap: BinaryHeap<Reverse<Entry>> = engines
        .iter()
        .map(|e| {
            Reverse(Entry {
                quality: e.quality(),
                task: e.id(),
                pos: e.pos,
            })
        })
        .collect();
    let mut steps = Vec::new();
    while let Some(Reverse(top)) = heap.pop() {
        let pos = top.pos;
        let proposal = engines[pos].propose(&b);
        state.beat(pos, top.task, proposal.as_ref());
        let Some(p) = proposal else { continue };
        b.charge(p.cost);
        let c = engines[pos].commit(p.slot);
        let step = PlanStep {
            task: p.task,
            slot: p.slot,
            worker: c.worker,
            cost: c.cost,
        };
        state.log.push(LogEvent::Commit(step));
        steps.push(step);
        for e in engines.iter_mut().filter(|e| e.pos != pos) {
            e.on_claim(c.worker, p.slot);
        }
        heap.push(Reverse(Entry {
            quality: engines[pos].quality(),
            task: top.task,
            pos,
        }));
    }
    Ok(finalize(
        tasks,
        pool,
        k,
        budget,
        &bounds,
        &engines,
        steps,
        state,
        Objective::Min,
    ))
}
