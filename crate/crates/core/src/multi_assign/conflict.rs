//! Worker-conflict graph between tasks and the group-parallel engine built on
//! its connected components.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::thread;

use serde::Serialize;

use super::master::{build_engines, serial_outcome};
use super::MultiOutcome;
use crate::model::{AssignmentPlan, SlotIndex, TaskId, TaskInstance, WorkerId, WorkerPool};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConflictGraph {
    pub tasks: Vec<TaskId>,
    /// Edges as (smaller id, larger id).
    pub edges: BTreeSet<(TaskId, TaskId)>,
    /// Nearest-worker bound rank per task, in `tasks` order.
    pub bound_rank: Vec<usize>,
    /// Expansion rounds until the fixed point.
    pub rounds: usize,
}

impl ConflictGraph {
    pub fn degree(&self, task: TaskId) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == task || b == task)
            .count()
    }

    /// Connected components as lists of positions into `tasks`, each sorted,
    /// ordered by their first position.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.tasks.len();
        let pos: HashMap<TaskId, usize> = self
            .tasks
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, i))
            .collect();
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for &(a, b) in &self.edges {
            let (ra, rb) = (root(&mut parent, pos[&a]), root(&mut parent, pos[&b]));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = root(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        groups.into_values().collect()
    }

    /// Workers within each task's bound at `slot`.
    fn bounded(
        tasks: &[TaskInstance],
        pool: &WorkerPool,
        ranks: &[usize],
        slot: SlotIndex,
    ) -> Vec<Vec<WorkerId>> {
        tasks
            .iter()
            .zip(ranks)
            .map(|(t, &d)| {
                if t.is_executed(slot) {
                    Vec::new()
                } else {
                    pool.ranked_at(&t.loc, slot)
                        .into_iter()
                        .take(d)
                        .map(|c| c.worker)
                        .collect()
                }
            })
            .collect()
    }

    /// Pairs of task positions in different components that share a worker
    /// within their final bounds at some slot. Empty for a sound graph.
    pub fn cross_component_contention(
        &self,
        tasks: &[TaskInstance],
        pool: &WorkerPool,
    ) -> Vec<(usize, usize, SlotIndex)> {
        let mut comp = vec![0; tasks.len()];
        for (c, members) in self.components().iter().enumerate() {
            for &i in members {
                comp[i] = c;
            }
        }
        let m = tasks.iter().map(|t| t.m).max().unwrap_or(0);
        let mut out = Vec::new();
        for j in 1..=m {
            let sets = Self::bounded(tasks, pool, &self.bound_rank, SlotIndex(j));
            for a in 0..tasks.len() {
                for b in a + 1..tasks.len() {
                    if comp[a] != comp[b] && sets[a].iter().any(|w| sets[b].contains(w)) {
                        out.push((a, b, SlotIndex(j)));
                    }
                }
            }
        }
        out
    }
}

/// Expands every task's nearest-worker bound until no new conflicts appear.
/// A task of degree `d` ends with its `(d + 1)`-NN bound at every slot.
pub fn build_conflict_graph(tasks: &[TaskInstance], pool: &WorkerPool) -> ConflictGraph {
    let n = tasks.len();
    let max_rank = pool
        .by_slot
        .values()
        .map(Vec::len)
        .max()
        .unwrap_or(0)
        .max(1);
    let m = tasks.iter().map(|t| t.m).max().unwrap_or(0);
    // ranked once; every round only reads a longer prefix
    let ranked: Vec<Vec<Vec<WorkerId>>> = tasks
        .iter()
        .map(|t| {
            (1..=m)
                .map(|j| {
                    let slot = SlotIndex(j);
                    if j > t.m || t.is_executed(slot) {
                        Vec::new()
                    } else {
                        pool.ranked_at(&t.loc, slot)
                            .into_iter()
                            .map(|c| c.worker)
                            .collect()
                    }
                })
                .collect()
        })
        .collect();
    let mut ranks = vec![1usize; n];
    let mut adjacent = vec![false; n * n];
    let mut degree = vec![0usize; n];
    let mut rounds = 0;
    loop {
        rounds += 1;
        for j in 0..m {
            let mut holders: HashMap<WorkerId, Vec<usize>> = HashMap::new();
            for (i, per_slot) in ranked.iter().enumerate() {
                let ws = &per_slot[j];
                for &w in &ws[..ranks[i].min(ws.len())] {
                    holders.entry(w).or_default().push(i);
                }
            }
            for hs in holders.values() {
                for (x, &a) in hs.iter().enumerate() {
                    for &b in &hs[x + 1..] {
                        if !adjacent[a * n + b] {
                            adjacent[a * n + b] = true;
                            adjacent[b * n + a] = true;
                            degree[a] += 1;
                            degree[b] += 1;
                        }
                    }
                }
            }
        }
        let next: Vec<usize> = degree.iter().map(|d| (d + 1).min(max_rank)).collect();
        let next: Vec<usize> = next.iter().zip(&ranks).map(|(a, b)| *a.max(b)).collect();
        if next == ranks {
            break;
        }
        ranks = next;
    }
    let mut edges = BTreeSet::new();
    for a in 0..n {
        for b in a + 1..n {
            if adjacent[a * n + b] {
                let (ta, tb) = (tasks[a].id, tasks[b].id);
                edges.insert((ta.min(tb), ta.max(tb)));
            }
        }
    }
    ConflictGraph {
        tasks: tasks.iter().map(|t| t.id).collect(),
        edges,
        bound_rank: ranks,
        rounds,
    }
}

/// Cost of executing every slot of `task` with its nearest worker.
fn full_cost(task: &TaskInstance, pool: &WorkerPool) -> f64 {
    (1..=task.m)
        .filter(|&j| !task.is_executed(SlotIndex(j)))
        .filter_map(|j| {
            pool.ranked_at(&task.loc, SlotIndex(j))
                .first()
                .map(|c| c.cost)
        })
        .fold(0.0, |acc, c| acc + c)
}

/// Budget share of each group, proportional to the summed full cost of its
/// tasks and shrunk slightly so the shares never add up past `budget`.
pub fn group_budgets(
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    groups: &[Vec<usize>],
    budget: f64,
) -> Vec<f64> {
    let weights: Vec<f64> = groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|&i| full_cost(&tasks[i], pool))
                .fold(0.0, |a, c| a + c)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|w| {
            let share = if total > 0.0 {
                budget * (w / total)
            } else {
                budget / groups.len() as f64
            };
            share * (1.0 - 1e-12)
        })
        .collect()
}

/// Runs the serial engine on every connected component of the conflict graph,
/// spreading components over `cores` threads. Engines only see the workers
/// inside their task's final bound, so components never contend.
pub fn msqm_group_parallel(
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    budget: f64,
    k: usize,
    t_s: usize,
    cores: usize,
) -> Result<(MultiOutcome, ConflictGraph)> {
    let graph = build_conflict_graph(tasks, pool);
    let groups = graph.components();
    let shares = group_budgets(tasks, pool, &groups, budget);
    let runs: Vec<(usize, Result<MultiOutcome>)> = {
        let lanes = cores.clamp(1, groups.len().max(1));
        let jobs: Vec<(usize, &Vec<usize>, f64)> = groups
            .iter()
            .zip(&shares)
            .enumerate()
            .map(|(g, (members, &b))| (g, members, b))
            .collect();
        let graph = &graph;
        thread::scope(|s| {
            let handles: Vec<_> = (0..lanes)
                .map(|lane| {
                    let mine: Vec<_> = jobs
                        .iter()
                        .filter(|j| j.0 % lanes == lane)
                        .cloned()
                        .collect();
                    s.spawn(move || {
                        mine.into_iter()
                            .map(|(g, members, b)| {
                                let sub: Vec<TaskInstance> =
                                    members.iter().map(|&i| tasks[i].clone()).collect();
                                let caps: Vec<Vec<usize>> = members
                                    .iter()
                                    .map(|&i| vec![graph.bound_rank[i]; tasks[i].m + 1])
                                    .collect();
                                let run = build_engines(&sub, pool, k, t_s, Some(&caps))
                                    .map(|engines| serial_outcome(&sub, pool, b, k, engines));
                                (g, run)
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            let mut all: Vec<_> = handles
                .into_iter()
                .flat_map(|h| h.join().expect("group thread"))
                .collect();
            all.sort_by_key(|r| r.0);
            all
        })
    };
    let mut qualities = vec![0.0; tasks.len()];
    let mut merged: Option<MultiOutcome> = None;
    for ((_, run), members) in runs.into_iter().zip(&groups) {
        let run = run?;
        for (q, &i) in run.qualities.iter().zip(members) {
            qualities[i] = *q;
        }
        merged = Some(match merged {
            None => run,
            Some(mut acc) => {
                acc.plan.steps.extend(run.plan.steps);
                acc.conflicts.extend(run.conflicts);
                acc.stats.absorb(&run.stats);
                acc.heartbeats.entries.extend(run.heartbeats.entries);
                acc.log.extend(run.log);
                acc.used_single |= run.used_single;
                acc
            }
        });
    }
    let mut out = merged.unwrap_or_else(|| MultiOutcome::empty(tasks));
    let spent = out.plan.recomputed_spent();
    out.plan = AssignmentPlan {
        steps: std::mem::take(&mut out.plan.steps),
        final_quality: qualities.iter().fold(0.0, |a, q| a + q),
        spent,
    };
    out.qualities = qualities;
    Ok((out, graph))
}
