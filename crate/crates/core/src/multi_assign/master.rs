//! The master loop shared by the serial and the task-parallel engines.
//!
//! The master holds the global budget, the claims and the three tables. Task
//! engines only answer requests, so the committed sequence depends on the
//! master's decisions alone and is the same whether engines run inline or on
//! their own threads.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread;

use super::engine::{Proposal, TaskEngine};
use super::tables::{ConflictRecord, HeartbeatTable, LogEvent, LoggingTable};
use super::{MultiOutcome, Objective, ParallelMode};
use crate::knn_index::SearchStats;
use crate::model::{
    AssignmentPlan, Budget, Candidate, PlanStep, SlotIndex, TaskId, TaskInstance, WorkerId,
    WorkerPool,
};
use crate::quality::task_quality;
use crate::single_assign::cheapest_candidates;
use crate::Result;

/// Execution lanes hosting the task engines.
pub(crate) trait Lanes {
    /// Current proposals of the engines at `positions`, in the same order.
    fn propose(&mut self, positions: &[usize], budget: Budget) -> Vec<Option<Proposal>>;
    fn commit(&mut self, pos: usize, slot: SlotIndex) -> Candidate;
    /// Tells every engine except `except` that `worker` is taken at `slot`.
    /// Returns the positions whose candidate there was that worker.
    fn claim(&mut self, worker: WorkerId, slot: SlotIndex, except: usize) -> Vec<usize>;
}

pub(crate) struct InlineLanes {
    pub engines: Vec<TaskEngine>,
}

impl Lanes for InlineLanes {
    fn propose(&mut self, positions: &[usize], budget: Budget) -> Vec<Option<Proposal>> {
        positions
            .iter()
            .map(|&p| self.engines[p].propose(&budget))
            .collect()
    }

    fn commit(&mut self, pos: usize, slot: SlotIndex) -> Candidate {
        self.engines[pos].commit(slot)
    }

    fn claim(&mut self, worker: WorkerId, slot: SlotIndex, except: usize) -> Vec<usize> {
        self.engines
            .iter_mut()
            .filter(|e| e.pos != except)
            .filter_map(|e| e.on_claim(worker, slot).then_some(e.pos))
            .collect()
    }
}

enum LaneMsg {
    Propose {
        positions: Vec<usize>,
        budget: Budget,
        reply: Sender<Vec<(usize, Option<Proposal>)>>,
    },
    Commit {
        pos: usize,
        slot: SlotIndex,
        reply: Sender<Candidate>,
    },
    Claim {
        worker: WorkerId,
        slot: SlotIndex,
        except: usize,
        reply: Sender<Vec<usize>>,
    },
}

/// Engines spread over threads; engine `pos` lives on lane `pos % lanes`.
struct ThreadLanes {
    senders: Vec<Sender<LaneMsg>>,
}

fn lane_loop(mut engines: Vec<TaskEngine>, rx: Receiver<LaneMsg>) -> Vec<TaskEngine> {
    let find = |engines: &mut Vec<TaskEngine>, pos: usize| {
        engines
            .iter()
            .position(|e| e.pos == pos)
            .expect("engine on lane")
    };
    while let Ok(msg) = rx.recv() {
        match msg {
            LaneMsg::Propose {
                positions,
                budget,
                reply,
            } => {
                let out = positions
                    .into_iter()
                    .map(|p| {
                        let i = find(&mut engines, p);
                        (p, engines[i].propose(&budget))
                    })
                    .collect();
                let _ = reply.send(out);
            }
            LaneMsg::Commit { pos, slot, reply } => {
                let i = find(&mut engines, pos);
                let _ = reply.send(engines[i].commit(slot));
            }
            LaneMsg::Claim {
                worker,
                slot,
                except,
                reply,
            } => {
                let hit = engines
                    .iter_mut()
                    .filter(|e| e.pos != except)
                    .filter_map(|e| e.on_claim(worker, slot).then_some(e.pos))
                    .collect();
                let _ = reply.send(hit);
            }
        }
    }
    engines
}

impl Lanes for ThreadLanes {
    fn propose(&mut self, positions: &[usize], budget: Budget) -> Vec<Option<Proposal>> {
        let lanes = self.senders.len();
        let mut per_lane = vec![Vec::new(); lanes];
        for &p in positions {
            per_lane[p % lanes].push(p);
        }
        let (tx, rx) = channel();
        let mut asked = 0;
        for (lane, ps) in per_lane.into_iter().enumerate() {
            if ps.is_empty() {
                continue;
            }
            asked += 1;
            self.senders[lane]
                .send(LaneMsg::Propose {
                    positions: ps,
                    budget,
                    reply: tx.clone(),
                })
                .expect("lane alive");
        }
        let mut got = BTreeMap::new();
        for _ in 0..asked {
            got.extend(rx.recv().expect("lane reply"));
        }
        positions.iter().map(|p| got[p]).collect()
    }

    fn commit(&mut self, pos: usize, slot: SlotIndex) -> Candidate {
        let (tx, rx) = channel();
        self.senders[pos % self.senders.len()]
            .send(LaneMsg::Commit {
                pos,
                slot,
                reply: tx,
            })
            .expect("lane alive");
        rx.recv().expect("lane reply")
    }

    fn claim(&mut self, worker: WorkerId, slot: SlotIndex, except: usize) -> Vec<usize> {
        let (tx, rx) = channel();
        for s in &self.senders {
            s.send(LaneMsg::Claim {
                worker,
                slot,
                except,
                reply: tx.clone(),
            })
            .expect("lane alive");
        }
        let mut hit: Vec<usize> = Vec::new();
        for _ in 0..self.senders.len() {
            hit.extend(rx.recv().expect("lane reply"));
        }
        hit.sort_unstable();
        hit
    }
}

/// Bookkeeping the master keeps besides the plan.
pub(crate) struct MasterState {
    pub heartbeats: HeartbeatTable,
    pub log: LoggingTable,
    pub conflicts: BTreeMap<usize, ConflictRecord>,
}

impl MasterState {
    pub fn new(ids: &[TaskId]) -> Self {
        MasterState {
            heartbeats: HeartbeatTable::new(ids),
            log: LoggingTable::default(),
            conflicts: BTreeMap::new(),
        }
    }

    pub fn beat(&mut self, pos: usize, task: TaskId, p: Option<&Proposal>) {
        let beat = self.heartbeats.report(
            pos,
            p.map_or(f64::NEG_INFINITY, |p| p.heuristic),
            p.map(|p| (p.worker, p.slot)),
        );
        self.log.push(LogEvent::Heartbeat { task, beat });
    }

    fn conflict(&mut self, slot: SlotIndex, tasks: impl IntoIterator<Item = TaskId>) {
        let rec = self
            .conflicts
            .entry(slot.0)
            .or_insert_with(|| ConflictRecord {
                tasks: BTreeSet::new(),
                slot,
                knn_rank: 1,
            });
        rec.tasks.extend(tasks);
        rec.knn_rank += 1;
        let rec = rec.clone();
        self.log.push(LogEvent::Conflict(rec));
    }

    pub fn conflict_records(&self) -> Vec<ConflictRecord> {
        self.conflicts.values().cloned().collect()
    }
}

/// Global greedy: repeatedly commits the best proposal over all engines.
pub(crate) fn run_master<L: Lanes>(
    lanes: &mut L,
    ids: &[TaskId],
    budget_total: f64,
    state: &mut MasterState,
) -> Vec<PlanStep> {
    let n = ids.len();
    let mut budget = Budget::new(budget_total);
    let all: Vec<usize> = (0..n).collect();
    let mut props = lanes.propose(&all, budget);
    for (pos, p) in props.iter().enumerate() {
        state.beat(pos, ids[pos], p.as_ref());
    }
    let mut steps = Vec::new();
    loop {
        let best = props
            .iter()
            .flatten()
            .fold(None::<&Proposal>, |b, p| match b {
                Some(b) if !p.beats(b) => Some(b),
                _ => Some(p),
            })
            .copied();
        let Some(p) = best else { break };
        budget.charge(p.cost);
        let c = lanes.commit(p.pos, p.slot);
        debug_assert_eq!(c.worker, p.worker);
        let step = PlanStep {
            task: p.task,
            slot: p.slot,
            worker: c.worker,
            cost: c.cost,
        };
        state.log.push(LogEvent::Commit(step));
        steps.push(step);
        let losers = lanes.claim(p.worker, p.slot, p.pos);
        if !losers.is_empty() {
            state.conflict(
                p.slot,
                std::iter::once(p.task).chain(losers.iter().map(|&l| ids[l])),
            );
        }
        let mut refresh = vec![p.pos];
        for (pos, q) in props.iter().enumerate() {
            let Some(q) = q else { continue };
            let lost = q.slot == p.slot && losers.contains(&pos);
            if pos != p.pos && (lost || !budget.affords(q.cost)) {
                refresh.push(pos);
            }
        }
        refresh.sort_unstable();
        let fresh = lanes.propose(&refresh, budget);
        for (&pos, q) in refresh.iter().zip(fresh) {
            state.beat(pos, ids[pos], q.as_ref());
            props[pos] = q;
        }
    }
    steps
}

pub(crate) fn build_engines(
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    k: usize,
    t_s: usize,
    rank_caps: Option<&[Vec<usize>]>,
) -> Result<Vec<TaskEngine>> {
    tasks
        .iter()
        .enumerate()
        .map(|(pos, t)| TaskEngine::new(pos, t, pool, k, t_s, rank_caps.map(|c| c[pos].as_slice())))
        .collect()
}

pub(crate) fn sum_in_order(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |acc, q| acc + q)
}

/// Compares the greedy result with the best single (task, slot) commit and
/// assembles the outcome.
#[allow(clippy::too_many_arguments)]
pub(crate) fn finalize(
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    k: usize,
    budget_total: f64,
    gain_bounds: &[f64],
    engines: &[TaskEngine],
    steps: Vec<PlanStep>,
    state: MasterState,
    objective: Objective,
) -> MultiOutcome {
    let mut qualities: Vec<f64> = engines.iter().map(TaskEngine::quality).collect();
    let greedy = objective.value(&qualities);
    let initial: Vec<f64> = tasks.iter().map(|t| task_quality(t, k)).collect();
    let max_gain = gain_bounds.iter().copied().fold(0.0, f64::max);
    let mut stats = SearchStats::default();
    for e in engines {
        stats.absorb(&e.stats());
    }
    let mut plan = AssignmentPlan {
        spent: sum_in_order(steps.iter().map(|s| s.cost)),
        steps,
        final_quality: greedy,
    };
    let mut used_single = false;
    // one commit raises either objective by at most `max_gain`
    if greedy < objective.value(&initial) + max_gain {
        let fresh = Budget::new(budget_total);
        let mut best: Option<(f64, usize, PlanStep, f64)> = None;
        for (i, t) in tasks.iter().enumerate() {
            for (j, c) in cheapest_candidates(t, pool).iter().enumerate().skip(1) {
                let Some(c) = c else { continue };
                if !fresh.affords(c.cost) {
                    continue;
                }
                let mut tt = t.clone();
                tt.execute(SlotIndex(j), c.worker, c.cost, c.reliability);
                let qi = task_quality(&tt, k);
                let mut after = initial.clone();
                after[i] = qi;
                let total = objective.value(&after);
                if best.is_none_or(|b| total > b.0) {
                    let step = PlanStep {
                        task: t.id,
                        slot: SlotIndex(j),
                        worker: c.worker,
                        cost: c.cost,
                    };
                    best = Some((total, i, step, qi));
                }
            }
        }
        if let Some((total, i, step, qi)) = best {
            if total > greedy {
                used_single = true;
                plan = AssignmentPlan {
                    steps: vec![step],
                    final_quality: total,
                    spent: step.cost,
                };
                qualities = initial;
                qualities[i] = qi;
            }
        }
    }
    MultiOutcome {
        conflicts: state.conflict_records(),
        plan,
        qualities,
        heartbeats: state.heartbeats,
        log: state.log,
        stats,
        used_single,
    }
}

/// Serial MSQM over the given engines.
pub(crate) fn serial_outcome(
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    budget: f64,
    k: usize,
    engines: Vec<TaskEngine>,
) -> MultiOutcome {
    let ids: Vec<TaskId> = tasks.iter().map(|t| t.id).collect();
    let bounds: Vec<f64> = engines.iter().map(|e| e.initial_gain_bound).collect();
    let mut state = MasterState::new(&ids);
    let mut lanes = InlineLanes { engines };
    let steps = run_master(&mut lanes, &ids, budget, &mut state);
    finalize(
        tasks,
        pool,
        k,
        budget,
        &bounds,
        &lanes.engines,
        steps,
        state,
        Objective::Sum,
    )
}

pub(crate) fn deterministic_parallel(
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    budget: f64,
    k: usize,
    engines: Vec<TaskEngine>,
    cores: usize,
) -> MultiOutcome {
    let ids: Vec<TaskId> = tasks.iter().map(|t| t.id).collect();
    let bounds: Vec<f64> = engines.iter().map(|e| e.initial_gain_bound).collect();
    let lanes = cores.clamp(1, engines.len().max(1));
    let mut per_lane: Vec<Vec<TaskEngine>> = (0..lanes).map(|_| Vec::new()).collect();
    for e in engines {
        per_lane[e.pos % lanes].push(e);
    }
    let mut state = MasterState::new(&ids);
    let (steps, mut engines) = thread::scope(|s| {
        let mut senders = Vec::new();
        let mut handles = Vec::new();
        for group in per_lane {
            let (tx, rx) = channel();
            senders.push(tx);
            handles.push(s.spawn(move || lane_loop(group, rx)));
        }
        let mut lanes = ThreadLanes { senders };
        let steps = run_master(&mut lanes, &ids, budget, &mut state);
        drop(lanes);
        let engines: Vec<TaskEngine> = handles
            .into_iter()
            .flat_map(|h| h.join().expect("lane thread"))
            .collect();
        (steps, engines)
    });
    engines.sort_by_key(|e| e.pos);
    finalize(
        tasks,
        pool,
        k,
        budget,
        &bounds,
        &engines,
        steps,
        state,
        Objective::Sum,
    )
}

enum Verdict {
    Continue {
        spent: f64,
    },
    Suspend {
        spent: f64,
    },
    Rejected {
        spent: f64,
        claimed: Option<(WorkerId, SlotIndex)>,
    },
}

enum ToMaster {
    Request {
        proposal: Proposal,
        reply: Sender<Verdict>,
    },
    Done {
        pos: usize,
    },
}

fn opportunistic_lane(
    mut engines: Vec<TaskEngine>,
    total: f64,
    tx: Sender<ToMaster>,
) -> Vec<TaskEngine> {
    let mut queue: VecDeque<usize> = (0..engines.len()).collect();
    let mut spent = 0.0;
    while let Some(i) = queue.pop_front() {
        let budget = Budget { total, spent };
        let Some(p) = engines[i].propose(&budget) else {
            let _ = tx.send(ToMaster::Done {
                pos: engines[i].pos,
            });
            continue;
        };
        let (rtx, rrx) = channel();
        tx.send(ToMaster::Request {
            proposal: p,
            reply: rtx,
        })
        .expect("master alive");
        match rrx.recv().expect("verdict") {
            Verdict::Continue { spent: s } => {
                spent = s;
                engines[i].commit(p.slot);
            }
            Verdict::Suspend { spent: s } => {
                spent = s;
                thread::yield_now();
            }
            Verdict::Rejected { spent: s, claimed } => {
                spent = s;
                if let Some((w, slot)) = claimed {
                    engines[i].on_claim(w, slot);
                }
            }
        }
        queue.push_back(i);
    }
    engines
}

/// Engines run freely and ask the master before each commit. The master
/// suspends a request when another engine with a higher reported heuristic is
/// aiming at the same worker and slot.
pub(crate) fn opportunistic_parallel(
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    budget_total: f64,
    k: usize,
    engines: Vec<TaskEngine>,
    cores: usize,
) -> MultiOutcome {
    let ids: Vec<TaskId> = tasks.iter().map(|t| t.id).collect();
    let n = ids.len();
    let bounds: Vec<f64> = engines.iter().map(|e| e.initial_gain_bound).collect();
    let lanes = cores.clamp(1, n.max(1));
    let mut per_lane: Vec<Vec<TaskEngine>> = (0..lanes).map(|_| Vec::new()).collect();
    for e in engines {
        per_lane[e.pos % lanes].push(e);
    }
    let mut state = MasterState::new(&ids);
    let mut budget = Budget::new(budget_total);
    let mut claimed: HashSet<(WorkerId, usize)> = HashSet::new();
    let mut steps = Vec::new();
    let mut engines = thread::scope(|s| {
        let (tx, rx) = channel();
        let handles: Vec<_> = per_lane
            .into_iter()
            .map(|group| {
                let tx = tx.clone();
                s.spawn(move || opportunistic_lane(group, budget_total, tx))
            })
            .collect();
        drop(tx);
        let mut done = 0;
        while done < n {
            match rx.recv().expect("lane message") {
                ToMaster::Done { pos } => {
                    done += 1;
                    state.beat(pos, ids[pos], None);
                }
                ToMaster::Request { proposal: p, reply } => {
                    state.beat(p.pos, p.task, Some(&p));
                    let target = (p.worker, p.slot);
                    let verdict = if claimed.contains(&(p.worker, p.slot.0)) {
                        let holder = steps
                            .iter()
                            .find(|s: &&PlanStep| (s.worker, s.slot) == target)
                            .map(|s| s.task);
                        state.conflict(p.slot, std::iter::once(p.task).chain(holder));
                        Verdict::Rejected {
                            spent: budget.spent,
                            claimed: Some(target),
                        }
                    } else if !budget.affords(p.cost) {
                        Verdict::Rejected {
                            spent: budget.spent,
                            claimed: None,
                        }
                    } else if state
                        .heartbeats
                        .entries
                        .iter()
                        .enumerate()
                        .any(|(i, (_, hb))| {
                            i != p.pos && hb.target == Some(target) && hb.heuristic > p.heuristic
                        })
                    {
                        Verdict::Suspend {
                            spent: budget.spent,
                        }
                    } else {
                        budget.charge(p.cost);
                        claimed.insert((p.worker, p.slot.0));
                        let step = PlanStep {
                            task: p.task,
                            slot: p.slot,
                            worker: p.worker,
                            cost: p.cost,
                        };
                        state.log.push(LogEvent::Commit(step));
                        steps.push(step);
                        Verdict::Continue {
                            spent: budget.spent,
                        }
                    };
                    let _ = reply.send(verdict);
                }
            }
        }
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("lane thread"))
            .collect::<Vec<_>>()
    });
    engines.sort_by_key(|e| e.pos);
    finalize(
        tasks,
        pool,
        k,
        budget_total,
        &bounds,
        &engines,
        steps,
        state,
        Objective::Sum,
    )
}

pub(crate) fn task_parallel(
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    budget: f64,
    k: usize,
    engines: Vec<TaskEngine>,
    cores: usize,
    mode: ParallelMode,
) -> MultiOutcome {
    match mode {
        ParallelMode::Opportunistic if cores > 1 => {
            opportunistic_parallel(tasks, pool, budget, k, engines, cores)
        }
        _ => deterministic_parallel(tasks, pool, budget, k, engines, cores),
    }
}
