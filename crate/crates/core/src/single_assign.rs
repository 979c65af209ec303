//! Budgeted cost-benefit greedy for a single task.
//!
//! Each iteration commits the affordable unexecuted slot with the largest
//! heuristic `Δq / c`, where `c` is the distance of the cheapest available
//! worker. The greedy result is finally compared against the best single
//! affordable slot, which gives the `1 - 1/√e` guarantee.
//!
//! [`greedy_assign`] evaluates every candidate directly. [`greedy_assign_indexed`]
//! produces the same trace through [`TaskIndex`].

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::knn_index::{SearchStats, TaskIndex};
use crate::model::{
    AssignmentPlan, Budget, Candidate, PlanStep, SlotIndex, SlotState, TaskInstance, WorkerId,
    WorkerPool, COST_EPSILON,
};
use crate::quality::{
    executed_probability, knn_in_sorted, partial_quality, probability_from_distance_sum,
    reliable_probability, slot_probabilities, task_quality,
};
use crate::{Error, Result};

/// Default cap on candidate slots for [`brute_force_optimal`].
pub const BRUTE_FORCE_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    Approx,
    ApproxStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreedyStep {
    pub slot: SlotIndex,
    pub worker: WorkerId,
    pub heuristic: f64,
    pub cost: f64,
    /// Task quality after the commit.
    pub quality: f64,
}

/// The best single affordable slot on the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleBest {
    pub slot: SlotIndex,
    pub worker: WorkerId,
    pub cost: f64,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyTrace {
    pub variant: Variant,
    pub initial_quality: f64,
    pub iterations: Vec<GreedyStep>,
    /// `None` when it was not computed because it provably cannot beat the
    /// greedy result, or when nothing is affordable.
    pub t_prime: Option<SingleBest>,
    /// True when the single best slot beat the greedy sequence and was returned.
    pub used_t_prime: bool,
    pub stats: SearchStats,
}

impl GreedyTrace {
    /// One line per iteration: `iter,slot,worker_id,cost,heuristic,quality`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# iter,slot,worker_id,cost,heuristic,quality\n");
        for (i, s) in self.iterations.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                i + 1,
                s.slot.0,
                s.worker,
                s.cost,
                s.heuristic,
                s.quality
            ));
        }
        out
    }

    /// Slot and cost sequence, the part that must agree across engines.
    pub fn commits(&self) -> Vec<(SlotIndex, f64)> {
        self.iterations.iter().map(|s| (s.slot, s.cost)).collect()
    }
}

/// Cheapest available worker per slot, indexed by slot (entry 0 unused).
/// Executed slots have no candidate.
pub fn cheapest_candidates(task: &TaskInstance, pool: &WorkerPool) -> Vec<Option<Candidate>> {
    let mut out = vec![None; task.m + 1];
    for (j, c) in out.iter_mut().enumerate().skip(1) {
        if !task.is_executed(SlotIndex(j)) {
            *c = pool.ranked_at(&task.loc, SlotIndex(j)).first().copied();
        }
    }
    out
}

/// Exact quality gain of executing `slot` with a worker of reliability
/// `reliability`, given the ascending `executed` slots and the current
/// per-slot probabilities `probs` (`probs[j - 1]`). Terms are summed in slot
/// order and unchanged slots are skipped.
pub(crate) fn direct_gain(
    task: &TaskInstance,
    executed: &[usize],
    probs: &[f64],
    slot: usize,
    reliability: f64,
    k: usize,
) -> f64 {
    let m = task.m;
    let pos = executed.partition_point(|&e| e < slot);
    let mut with = Vec::with_capacity(executed.len() + 1);
    with.extend_from_slice(&executed[..pos]);
    with.push(slot);
    with.extend_from_slice(&executed[pos..]);
    let rel = |s: usize| {
        if s == slot {
            reliability
        } else {
            match task.states[s - 1] {
                SlotState::Executed { reliability, .. } => reliability,
                SlotState::Null => 1.0,
            }
        }
    };
    let mut total = 0.0;
    for j in 1..=m {
        let new = if j == slot {
            if task.reliability_mode {
                reliability / m as f64
            } else {
                executed_probability(m)
            }
        } else if task.states[j - 1].is_executed() {
            continue;
        } else {
            let ns = knn_in_sorted(&with, j, k, rel);
            if task.reliability_mode {
                reliable_probability(&ns, k, m)
            } else {
                probability_from_distance_sum(ns.distance_sum(m), k, m)
            }
        };
        let old = probs[j - 1];
        if new != old {
            total += partial_quality(new) - partial_quality(old);
        }
    }
    total
}

/// The affordable slot whose sole execution yields the highest quality, ties
/// to the smaller slot.
fn best_single(
    task: &TaskInstance,
    cands: &[Option<Candidate>],
    budget: f64,
    k: usize,
) -> Option<SingleBest> {
    let fresh = Budget::new(budget);
    let mut best: Option<SingleBest> = None;
    for (j, c) in cands.iter().enumerate().skip(1) {
        let Some(c) = c else { continue };
        if !fresh.affords(c.cost) {
            continue;
        }
        let mut t = task.clone();
        t.execute(SlotIndex(j), c.worker, c.cost, c.reliability);
        let q = task_quality(&t, k);
        if best.is_none_or(|b| q > b.quality) {
            best = Some(SingleBest {
                slot: SlotIndex(j),
                worker: c.worker,
                cost: c.cost,
                quality: q,
            });
        }
    }
    best
}

fn finish(
    task: &TaskInstance,
    mut trace: GreedyTrace,
    t_prime: Option<SingleBest>,
) -> (AssignmentPlan, GreedyTrace) {
    let greedy_quality = trace
        .iterations
        .last()
        .map_or(trace.initial_quality, |s| s.quality);
    trace.t_prime = t_prime;
    let plan = match t_prime {
        Some(t) if t.quality > greedy_quality => {
            trace.used_t_prime = true;
            AssignmentPlan {
                steps: vec![PlanStep {
                    task: task.id,
                    slot: t.slot,
                    worker: t.worker,
                    cost: t.cost,
                }],
                final_quality: t.quality,
                spent: t.cost,
            }
        }
        _ => {
            let steps: Vec<PlanStep> = trace
                .iterations
                .iter()
                .map(|s| PlanStep {
                    task: task.id,
                    slot: s.slot,
                    worker: s.worker,
                    cost: s.cost,
                })
                .collect();
            let spent = steps.iter().fold(0.0, |acc, s| acc + s.cost);
            AssignmentPlan {
                steps,
                final_quality: greedy_quality,
                spent,
            }
        }
    };
    (plan, trace)
}

/// Greedy with every candidate's gain computed directly.
pub fn greedy_assign(
    task: &TaskInstance,
    pool: &WorkerPool,
    budget: f64,
    k: usize,
) -> Result<(AssignmentPlan, GreedyTrace)> {
    let cands = cheapest_candidates(task, pool);
    let mut state = task.clone();
    let mut budget_left = Budget::new(budget);
    let mut executed = state.executed_slots();
    let mut probs = slot_probabilities(&state, k);
    let mut trace = GreedyTrace {
        variant: Variant::Approx,
        initial_quality: task_quality(&state, k),
        iterations: Vec::new(),
        t_prime: None,
        used_t_prime: false,
        stats: SearchStats::default(),
    };
    loop {
        trace.stats.searches += 1;
        let mut best: Option<(f64, f64, usize)> = None;
        for (j, c) in cands.iter().enumerate().skip(1) {
            let Some(c) = c else { continue };
            if state.is_executed(SlotIndex(j)) || !budget_left.affords(c.cost) {
                continue;
            }
            trace.stats.candidates += 1;
            trace.stats.exact_evaluations += 1;
            let gain = direct_gain(&state, &executed, &probs, j, c.reliability, k);
            let h = gain / c.cost.max(COST_EPSILON);
            if best.is_none_or(|(bh, _, _)| h > bh) {
                best = Some((h, gain, j));
            }
        }
        let Some((heuristic, _, j)) = best else { break };
        let c = cands[j].expect("candidate");
        state.execute(SlotIndex(j), c.worker, c.cost, c.reliability);
        budget_left.charge(c.cost);
        executed = state.executed_slots();
        probs = slot_probabilities(&state, k);
        trace.iterations.push(GreedyStep {
            slot: SlotIndex(j),
            worker: c.worker,
            heuristic,
            cost: c.cost,
            quality: probs.iter().fold(0.0, |acc, &p| acc + partial_quality(p)),
        });
    }
    let t_prime = best_single(task, &cands, budget, k);
    Ok(finish(task, trace, t_prime))
}

/// Greedy driven by [`TaskIndex`]; same trace as [`greedy_assign`].
pub fn greedy_assign_indexed(
    task: &TaskInstance,
    pool: &WorkerPool,
    budget: f64,
    k: usize,
    t_s: usize,
) -> Result<(AssignmentPlan, GreedyTrace)> {
    let cands = cheapest_candidates(task, pool);
    let mut index = TaskIndex::from_task(task, k, t_s)?;
    for (j, c) in cands.iter().enumerate().skip(1) {
        index.set_cost(SlotIndex(j), c.map(|c| c.cost));
    }
    let initial_quality = index.quality();
    let single_gain_bound = index.gain_upper_bound();
    let mut budget_left = Budget::new(budget);
    let mut trace = GreedyTrace {
        variant: Variant::ApproxStar,
        initial_quality,
        iterations: Vec::new(),
        t_prime: None,
        used_t_prime: false,
        stats: SearchStats::default(),
    };
    while let Some(sel) = index.find_max_heuristic(&budget_left) {
        let c = cands[sel.slot.0].expect("candidate");
        budget_left.charge(c.cost);
        index.execute(sel.slot);
        trace.iterations.push(GreedyStep {
            slot: sel.slot,
            worker: c.worker,
            heuristic: sel.heuristic,
            cost: c.cost,
            quality: index.quality(),
        });
    }
    trace.stats = index.stats();
    let greedy_quality = trace
        .iterations
        .last()
        .map_or(initial_quality, |s| s.quality);
    // a single slot gains at most `single_gain_bound`; skip the O(m^2) scan
    // when that cannot beat the greedy sequence
    let t_prime = if greedy_quality >= initial_quality + single_gain_bound {
        None
    } else {
        best_single(task, &cands, budget, k)
    };
    Ok(finish(task, trace, t_prime))
}

/// Optimal plan by enumerating every subset of affordable candidate slots.
/// Refuses instances with more than `cap` candidates.
pub fn brute_force_optimal(
    task: &TaskInstance,
    pool: &WorkerPool,
    budget: f64,
    k: usize,
    cap: usize,
) -> Result<(AssignmentPlan, f64)> {
    let cands = cheapest_candidates(task, pool);
    let fresh = Budget::new(budget);
    let slots: Vec<(usize, Candidate)> = cands
        .iter()
        .enumerate()
        .filter_map(|(j, c)| c.filter(|c| fresh.affords(c.cost)).map(|c| (j, c)))
        .collect();
    if slots.len() > cap {
        return Err(Error::InstanceTooLarge {
            candidates: slots.len(),
            cap,
        });
    }
    let mut best_mask = 0u64;
    let mut best_q = task_quality(task, k);
    for mask in 1u64..(1u64 << slots.len()) {
        let mut b = Budget::new(budget);
        let mut t = task.clone();
        let mut ok = true;
        for (i, (j, c)) in slots.iter().enumerate() {
            if mask >> i & 1 == 1 {
                if !b.affords(c.cost) {
                    ok = false;
                    break;
                }
                b.charge(c.cost);
                t.execute(SlotIndex(*j), c.worker, c.cost, c.reliability);
            }
        }
        if !ok {
            continue;
        }
        let q = task_quality(&t, k);
        if q > best_q {
            best_q = q;
            best_mask = mask;
        }
    }
    let steps: Vec<PlanStep> = slots
        .iter()
        .enumerate()
        .filter(|(i, _)| best_mask >> i & 1 == 1)
        .map(|(_, (j, c))| PlanStep {
            task: task.id,
            slot: SlotIndex(*j),
            worker: c.worker,
            cost: c.cost,
        })
        .collect();
    let spent = steps.iter().fold(0.0, |acc, s| acc + s.cost);
    Ok((
        AssignmentPlan {
            steps,
            final_quality: best_q,
            spent,
        },
        best_q,
    ))
}

/// Baseline that commits uniformly random affordable slots, each to its
/// nearest worker, until nothing is affordable.
pub fn random_assign(
    task: &TaskInstance,
    pool: &WorkerPool,
    budget: f64,
    k: usize,
    seed: u64,
) -> AssignmentPlan {
    let cands = cheapest_candidates(task, pool);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = task.clone();
    let mut b = Budget::new(budget);
    let mut steps = Vec::new();
    loop {
        let open: Vec<usize> = (1..=task.m)
            .filter(|&j| {
                !state.is_executed(SlotIndex(j)) && cands[j].is_some_and(|c| b.affords(c.cost))
            })
            .collect();
        let Some(&j) = open.choose(&mut rng) else {
            break;
        };
        let c = cands[j].expect("candidate");
        b.charge(c.cost);
        state.execute(SlotIndex(j), c.worker, c.cost, c.reliability);
        steps.push(PlanStep {
            task: task.id,
            slot: SlotIndex(j),
            worker: c.worker,
            cost: c.cost,
        });
    }
    AssignmentPlan {
        steps,
        final_quality: task_quality(&state, k),
        spent: b.spent,
    }
}
