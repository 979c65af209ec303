//! Exhaustive joint search over (task, slot) pairs for tiny multi-task
//! instances. Test oracle only.

use super::Objective;
use crate::model::{AssignmentPlan, PlanStep, SlotIndex, TaskInstance, WorkerId, WorkerPool};
use crate::quality::task_quality;
use crate::{Error, Result};

/// Default cap on (task, slot) pairs.
pub const JOINT_CAP: usize = 20;

type SlotPlan = (f64, Vec<(usize, WorkerId, f64)>);

/// Cheapest assignment of distinct workers to `chosen` task positions at one
/// slot, as (total cost, (task position, worker, cost) per task).
fn slot_assignment(costs: &[Vec<(WorkerId, f64)>], chosen: &[usize]) -> Option<SlotPlan> {
    fn go(
        costs: &[Vec<(WorkerId, f64)>],
        chosen: &[usize],
        used: &mut Vec<WorkerId>,
        acc: &mut Vec<(usize, WorkerId, f64)>,
        best: &mut Option<SlotPlan>,
    ) {
        let Some((&t, rest)) = chosen.split_first() else {
            let total = acc.iter().fold(0.0, |a, x| a + x.2);
            if best.as_ref().is_none_or(|b| total < b.0) {
                *best = Some((total, acc.clone()));
            }
            return;
        };
        for &(w, c) in &costs[t] {
            if used.contains(&w) {
                continue;
            }
            used.push(w);
            acc.push((t, w, c));
            go(costs, rest, used, acc, best);
            acc.pop();
            used.pop();
        }
    }
    let mut best = None;
    go(costs, chosen, &mut Vec::new(), &mut Vec::new(), &mut best);
    best
}

struct Search<'a> {
    tasks: &'a [TaskInstance],
    k: usize,
    budget: f64,
    objective: Objective,
    pairs: Vec<(usize, usize)>,
    /// Per slot, per task position: ranked (worker, cost).
    costs: Vec<Vec<Vec<(WorkerId, f64)>>>,
    chosen: Vec<Vec<usize>>,
    best: (f64, Vec<PlanStep>),
}

impl Search<'_> {
    fn slot_costs(&self) -> Option<(f64, Vec<PlanStep>)> {
        let mut total = 0.0;
        let mut steps = Vec::new();
        for (j, chosen) in self.chosen.iter().enumerate() {
            if chosen.is_empty() {
                continue;
            }
            let (c, a) = slot_assignment(&self.costs[j], chosen)?;
            total += c;
            steps.extend(a.into_iter().map(|(t, w, c)| PlanStep {
                task: self.tasks[t].id,
                slot: SlotIndex(j),
                worker: w,
                cost: c,
            }));
        }
        Some((total, steps))
    }

    fn run(&mut self, i: usize) {
        let Some((total, steps)) = self.slot_costs() else {
            return;
        };
        if total > self.budget {
            return;
        }
        if i == self.pairs.len() {
            let mut ts: Vec<TaskInstance> = self.tasks.to_vec();
            for s in &steps {
                let t = ts.iter_mut().find(|t| t.id == s.task).expect("task");
                t.execute(s.slot, s.worker, s.cost, 1.0);
            }
            let qs: Vec<f64> = ts.iter().map(|t| task_quality(t, self.k)).collect();
            let v = self.objective.value(&qs);
            if v > self.best.0 {
                self.best = (v, steps);
            }
            return;
        }
        let (t, j) = self.pairs[i];
        self.run(i + 1);
        self.chosen[j].push(t);
        self.run(i + 1);
        self.chosen[j].pop();
    }
}

/// Best plan over every set of (task, slot) pairs whose per-slot cheapest
/// distinct-worker assignment fits the budget. Reliability is ignored.
pub fn joint_brute_force(
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    budget: f64,
    k: usize,
    objective: Objective,
    cap: usize,
) -> Result<(AssignmentPlan, f64)> {
    if tasks.is_empty() {
        return Err(Error::EmptyTaskSet);
    }
    let m = tasks.iter().map(|t| t.m).max().unwrap_or(0);
    let mut costs = vec![vec![Vec::new(); tasks.len()]; m + 1];
    let mut pairs = Vec::new();
    for (i, t) in tasks.iter().enumerate() {
        for (j, slot_costs) in costs.iter_mut().enumerate().take(t.m + 1).skip(1) {
            if t.is_executed(SlotIndex(j)) {
                continue;
            }
            let ranked = pool.ranked_at(&t.loc, SlotIndex(j));
            if ranked.first().is_some_and(|c| c.cost <= budget) {
                pairs.push((i, j));
            }
            slot_costs[i] = ranked.iter().map(|c| (c.worker, c.cost)).collect();
        }
    }
    if pairs.len() > cap {
        return Err(Error::InstanceTooLarge {
            candidates: pairs.len(),
            cap,
        });
    }
    let initial: Vec<f64> = tasks.iter().map(|t| task_quality(t, k)).collect();
    let mut search = Search {
        tasks,
        k,
        budget,
        objective,
        pairs,
        costs,
        chosen: vec![Vec::new(); m + 1],
        best: (objective.value(&initial), Vec::new()),
    };
    search.run(0);
    let (value, steps) = search.best;
    let spent = steps.iter().fold(0.0, |a, s| a + s.cost);
    Ok((
        AssignmentPlan {
            steps,
            final_quality: value,
            spent,
        },
        value,
    ))
}
