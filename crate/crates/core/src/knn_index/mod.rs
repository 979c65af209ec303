//! Index-accelerated retrieval of the slot with the largest heuristic value
//! (quality gain per unit cost).
//!
//! [`VoronoiTree`] keeps the kNN structure of the executed slots and the
//! per-slot probabilities. [`TaskIndex`] adds candidate costs and runs a
//! best-first search over tree nodes ordered by admissible upper bounds, so the
//! slot it returns is exactly the one a full scan would pick.
//!
//! Gains are cached per slot. Executing slot `e` changes the probability of the
//! slots `A(e)` that `e` would become a neighbor of; a cached gain of slot `s`
//! is dropped when `A(s)` may intersect `A(e)`.

mod bounds;
pub mod tree;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::model::{Budget, SlotIndex, TaskInstance, COST_EPSILON};
use crate::quality::{
    executed_probability, partial_quality, probability_from_distance_sum, NeighborSet,
};
use crate::{Error, Result};
use bounds::{SlotBounds, SlotEntry};
pub use tree::{IndexNode, InfluenceRange, NodeId, VoronoiTree};

/// Relative slack added to every node bound so that floating-point rounding in
/// the bound never drops it below an exact value.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub slot: SlotIndex,
    /// Quality gain divided by the (floored) cost.
    pub heuristic: f64,
    pub gain: f64,
    pub cost: f64,
}

/// Counters accumulated over all searches of one index.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct SearchStats {
    pub searches: usize,
    /// Candidate slots present at the start of each search, summed.
    pub candidates: usize,
    /// Gains computed from scratch.
    pub exact_evaluations: usize,
    pub cache_hits: usize,
    pub heap_pops: usize,
}

impl SearchStats {
    /// Share of candidate slots whose gain had to be computed.
    pub fn evaluated_fraction(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            self.exact_evaluations as f64 / self.candidates as f64
        }
    }

    pub fn pruning_ratio(&self) -> f64 {
        1.0 - self.evaluated_fraction()
    }

    pub fn absorb(&mut self, other: &SearchStats) {
        self.searches += other.searches;
        self.candidates += other.candidates;
        self.exact_evaluations += other.exact_evaluations;
        self.cache_hits += other.cache_hits;
        self.heap_pops += other.heap_pops;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EntryKind {
    Node = 0,
    Slot = 1,
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    value: f64,
    kind: EntryKind,
    l: usize,
    r: usize,
    node: Option<NodeId>,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // max-heap: larger value first, slots before nodes, then smaller l
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(self.kind.cmp(&other.kind))
            .then(other.l.cmp(&self.l))
    }
}

#[derive(Debug, Clone)]
pub struct TaskIndex {
    tree: VoronoiTree,
    entries: Vec<SlotEntry>,
    bounds: SlotBounds,
    stats: SearchStats,
}

impl TaskIndex {
    /// Index over a task with the given executed slots. Every slot starts
    /// without a candidate; see [`TaskIndex::set_cost`].
    pub fn new(m: usize, k: usize, t_s: usize, executed: &[usize]) -> Self {
        let tree = VoronoiTree::build(m, k, t_s, executed);
        let mut idx = TaskIndex {
            tree,
            entries: vec![SlotEntry::EMPTY; m + 1],
            bounds: SlotBounds::new(m),
            stats: SearchStats::default(),
        };
        for j in 1..=m {
            idx.refresh_entry(j, false);
            idx.bounds.set(j, &idx.entries[j]);
        }
        idx
    }

    pub fn from_task(task: &TaskInstance, k: usize, t_s: usize) -> Result<Self> {
        if task.reliability_mode {
            return Err(Error::ReliabilityUnsupported);
        }
        Ok(Self::new(task.m, k, t_s, &task.executed_slots()))
    }

    pub fn tree(&self) -> &VoronoiTree {
        &self.tree
    }

    pub fn m(&self) -> usize {
        self.tree.m()
    }

    pub fn stats(&self) -> SearchStats {
        self.stats
    }

    pub fn query_knn(&self, slot: SlotIndex) -> NeighborSet {
        self.tree.query_knn(slot.0)
    }

    pub fn influence_range(&self, node: NodeId) -> InfluenceRange {
        self.tree.influence_range(node)
    }

    pub fn is_executed(&self, slot: SlotIndex) -> bool {
        self.tree.is_executed(slot.0)
    }

    pub fn probability(&self, slot: SlotIndex) -> f64 {
        self.tree.probability(slot.0)
    }

    /// Task quality summed in slot order; equal bit for bit to
    /// [`crate::quality::task_quality`] on the same state.
    pub fn quality(&self) -> f64 {
        (1..=self.m()).fold(0.0, |acc, j| {
            acc + partial_quality(self.tree.probability(j))
        })
    }

    pub fn cost(&self, slot: SlotIndex) -> Option<f64> {
        let c = self.entries[slot.0].cost;
        c.is_finite().then_some(c)
    }

    /// Sets the candidate cost of an unexecuted slot; `None` removes it from
    /// the candidates.
    pub fn set_cost(&mut self, slot: SlotIndex, cost: Option<f64>) {
        let j = slot.0;
        if self.tree.is_executed(j) {
            return;
        }
        self.entries[j].cost = cost.unwrap_or(f64::INFINITY);
        self.bounds.set(j, &self.entries[j]);
    }

    fn refresh_entry(&mut self, j: usize, keep_cache: bool) {
        if self.tree.is_executed(j) {
            self.entries[j] = SlotEntry::EMPTY;
            return;
        }
        let (m, k) = (self.tree.m(), self.tree.k());
        let view = &self.tree.slots;
        let p = view.prob[j];
        let g = partial_quality(p);
        let best = view.distance_sum[j] - view.kth[j] as u64 + 1;
        let gain_bound = partial_quality(probability_from_distance_sum(best, k, m)) - g;
        let self_gain = partial_quality(executed_probability(m)) - g;
        let e = &mut self.entries[j];
        e.gain_bound = gain_bound.max(0.0);
        e.self_excess = (self_gain - e.gain_bound).max(0.0);
        if !keep_cache {
            e.cached_gain = None;
        }
    }

    /// Exact quality gain of executing `slot`, summed over the affected slots in
    /// ascending order.
    fn compute_gain(&self, slot: usize) -> f64 {
        let m = self.tree.m();
        let k = self.tree.k();
        let view = &self.tree.slots;
        let reaches = |j: usize| slot.abs_diff(j) < view.kth[j];
        let mut lo = slot;
        while lo > 1 && reaches(lo - 1) {
            lo -= 1;
        }
        let mut hi = slot;
        while hi < m && reaches(hi + 1) {
            hi += 1;
        }
        let mut total = 0.0;
        for j in lo..=hi {
            let new = if j == slot {
                executed_probability(m)
            } else if view.executed[j] || !reaches(j) {
                continue;
            } else {
                let d = slot.abs_diff(j) as u64;
                probability_from_distance_sum(view.distance_sum[j] - view.kth[j] as u64 + d, k, m)
            };
            let old = view.prob[j];
            if new != old {
                total += partial_quality(new) - partial_quality(old);
            }
        }
        total
    }

    /// Exact gain of an unexecuted slot, served from the cache when valid.
    pub fn exact_gain(&mut self, slot: SlotIndex) -> f64 {
        let j = slot.0;
        debug_assert!(!self.tree.is_executed(j));
        if let Some(g) = self.entries[j].cached_gain {
            self.stats.cache_hits += 1;
            return g;
        }
        let g = self.compute_gain(j);
        self.stats.exact_evaluations += 1;
        self.entries[j].cached_gain = Some(g);
        self.bounds.set(j, &self.entries[j]);
        g
    }

    /// Exact heuristic of a candidate slot, or `None` if it has no candidate.
    pub fn exact_heuristic(&mut self, slot: SlotIndex) -> Option<f64> {
        let cost = self.cost(slot)?;
        let gain = self.exact_gain(slot);
        Some(gain / cost.max(COST_EPSILON))
    }

    /// Sum of gain bounds over every slot that executing some slot in
    /// `[l, r]` can affect.
    fn reachable_gain_bound(&self, l: usize, r: usize) -> f64 {
        let view = &self.tree.slots;
        let m = self.tree.m();
        // (l - j) < kth[j] only gets easier as j approaches l
        let (mut a, mut b) = (1usize, l);
        while a < b {
            let mid = (a + b) / 2;
            if l - mid < view.kth[mid] {
                b = mid;
            } else {
                a = mid + 1;
            }
        }
        let left = a;
        let (mut a, mut b) = (r, m);
        while a < b {
            let mid = (a + b).div_ceil(2);
            if mid - r < view.kth[mid] {
                a = mid;
            } else {
                b = mid - 1;
            }
        }
        let right = a;
        self.bounds.query(left.min(l), right.max(r)).gain_bound_sum
    }

    /// Upper bound on the heuristic of every slot in `[l, r]`, or negative
    /// infinity when no slot there is an affordable candidate.
    pub fn heuristic_upper_bound(&self, l: usize, r: usize, budget: &Budget) -> f64 {
        let agg = self.bounds.query(l, r);
        if !(agg.min_cost.is_finite() && budget.affords(agg.min_cost)) {
            return f64::NEG_INFINITY;
        }
        let open = if agg.min_cost_open.is_finite() {
            (agg.max_excess_open + self.reachable_gain_bound(l, r))
                / agg.min_cost_open.max(COST_EPSILON)
        } else {
            f64::NEG_INFINITY
        };
        let raw = open.max(agg.max_cached);
        raw + raw.abs() * BOUND_SLACK
    }

    pub fn node_upper_bound(&self, node: NodeId, budget: &Budget) -> f64 {
        let n = self.tree.node(node);
        self.heuristic_upper_bound(n.l, n.r, budget)
    }

    /// Upper bound on the gain (not divided by cost) of any slot.
    pub fn gain_upper_bound(&self) -> f64 {
        let m = self.m();
        let agg = self.bounds.query(1, m);
        if !agg.min_cost.is_finite() {
            return 0.0;
        }
        let raw = agg.max_excess_open.max(0.0) + agg.gain_bound_sum;
        let cached_max = (1..=m)
            .filter_map(|j| self.entries[j].cached_gain)
            .fold(0.0, f64::max);
        raw.max(cached_max) * (1.0 + BOUND_SLACK)
    }

    /// The affordable candidate slot with the largest heuristic, ties broken
    /// towards the smaller slot; `None` when nothing is affordable.
    pub fn find_max_heuristic(&mut self, budget: &Budget) -> Option<Selection> {
        self.stats.searches += 1;
        let m = self.m();
        self.stats.candidates += self.bounds.query(1, m).candidates;
        let span = self.tree.t_s().max(1);
        let mut heap = BinaryHeap::new();
        let root = self.tree.root();
        let ub = self.node_upper_bound(root, budget);
        if ub == f64::NEG_INFINITY {
            return None;
        }
        heap.push(HeapEntry {
            value: ub,
            kind: EntryKind::Node,
            l: 1,
            r: m,
            node: Some(root),
        });
        while let Some(top) = heap.pop() {
            self.stats.heap_pops += 1;
            if top.kind == EntryKind::Slot {
                let slot = SlotIndex(top.l);
                let cost = self.entries[top.l].cost;
                let gain = self.entries[top.l].cached_gain.expect("evaluated slot");
                return Some(Selection {
                    slot,
                    heuristic: top.value,
                    gain,
                    cost,
                });
            }
            let children = top.node.and_then(|id| self.tree.node(id).children);
            if let Some((a, b)) = children {
                for c in [a, b] {
                    let ub = self.node_upper_bound(c, budget);
                    if ub > f64::NEG_INFINITY {
                        let n = self.tree.node(c);
                        heap.push(HeapEntry {
                            value: ub,
                            kind: EntryKind::Node,
                            l: n.l,
                            r: n.r,
                            node: Some(c),
                        });
                    }
                }
            } else if top.r - top.l < span {
                for j in top.l..=top.r {
                    let cost = self.entries[j].cost;
                    if !(cost.is_finite() && budget.affords(cost)) {
                        continue;
                    }
                    let gain = self.exact_gain(SlotIndex(j));
                    heap.push(HeapEntry {
                        value: gain / cost.max(COST_EPSILON),
                        kind: EntryKind::Slot,
                        l: j,
                        r: j,
                        node: None,
                    });
                }
            } else {
                let mid = (top.l + top.r).div_ceil(2);
                for (l, r) in [(top.l, mid - 1), (mid, top.r)] {
                    let ub = self.heuristic_upper_bound(l, r, budget);
                    if ub > f64::NEG_INFINITY {
                        heap.push(HeapEntry {
                            value: ub,
                            kind: EntryKind::Node,
                            l,
                            r,
                            node: None,
                        });
                    }
                }
            }
        }
        None
    }

    /// Marks `slot` executed and refreshes the index around it.
    pub fn execute(&mut self, slot: SlotIndex) {
        let m = self.m();
        let changed = self.tree.execute(slot.0);
        if changed.is_empty() {
            return;
        }
        let mut lo = m;
        let mut hi = 1;
        for c in &changed {
            let reach = c.old_kth.saturating_sub(1);
            lo = lo.min(c.slot.saturating_sub(reach).max(1));
            hi = hi.max((c.slot + reach).min(m));
        }
        for j in lo..=hi {
            self.entries[j].cached_gain = None;
        }
        for c in &changed {
            self.refresh_entry(c.slot, false);
        }
        self.entries[slot.0] = SlotEntry::EMPTY;
        for j in lo..=hi {
            self.bounds.set(j, &self.entries[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Point;
    use crate::quality::task_quality;

    fn task_with(m: usize, executed: &[usize]) -> TaskInstance {
        let mut t = TaskInstance::new(0, Point::default(), m);
        for &s in executed {
            t.execute(SlotIndex(s), 0, 1.0, 1.0);
        }
        t
    }

    fn brute_gain(m: usize, k: usize, executed: &[usize], slot: usize) -> f64 {
        let before = task_quality(&task_with(m, executed), k);
        let mut more = executed.to_vec();
        more.push(slot);
        task_quality(&task_with(m, &more), k) - before
    }

    #[test]
    fn gains_match_tentative_execution() {
        let executed = [4, 9, 10, 23, 31];
        for k in 1..=4 {
            let mut idx = TaskIndex::new(40, k, 4, &executed);
            for j in 1..=40 {
                if executed.contains(&j) {
                    continue;
                }
                let g = idx.exact_gain(SlotIndex(j));
                assert!((g - brute_gain(40, k, &executed, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn worked_example_selects_slot_one() {
        // at m = 100 slots 8 and 10 onwards reshape the empty tail and win, so
        // only the interior slots walked through by the example compete
        let mut idx = TaskIndex::new(100, 2, 4, &[2, 4, 7, 9]);
        for j in [1, 3, 5, 6] {
            idx.set_cost(SlotIndex(j), Some(1.0));
        }
        let sel = idx.find_max_heuristic(&Budget::new(10.0)).unwrap();
        assert_eq!(sel.slot, SlotIndex(1));

        // with no tail, slot 1 ties slot 10 and wins on index
        let mut idx = TaskIndex::new(10, 2, 4, &[2, 4, 7, 9]);
        for j in 1..=10 {
            idx.set_cost(SlotIndex(j), Some(1.0));
        }
        let sel = idx.find_max_heuristic(&Budget::new(10.0)).unwrap();
        assert_eq!(sel.slot, SlotIndex(1));
    }

    #[test]
    fn zero_budget_is_exhausted() {
        let mut idx = TaskIndex::new(20, 2, 4, &[]);
        for j in 1..=20 {
            idx.set_cost(SlotIndex(j), Some(1.0));
        }
        assert!(idx.find_max_heuristic(&Budget::new(0.0)).is_none());
    }

    #[test]
    fn fully_executed_node_bound_is_sentinel() {
        let idx = TaskIndex::new(10, 1, 1, &(1..=10).collect::<Vec<_>>());
        assert_eq!(
            idx.node_upper_bound(idx.tree().root(), &Budget::new(5.0)),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn single_slot_bound_is_admissible() {
        let mut idx = TaskIndex::new(30, 3, 1, &[5, 17]);
        for j in 1..=30 {
            idx.set_cost(SlotIndex(j), Some(1.0 + j as f64 * 0.1));
        }
        let budget = Budget::new(100.0);
        for j in (1..=30).filter(|j| ![5, 17].contains(j)) {
            let ub = idx.heuristic_upper_bound(j, j, &budget);
            let h = idx.exact_heuristic(SlotIndex(j)).unwrap();
            assert!(ub >= h);
        }
    }

    #[test]
    fn quality_tracks_direct_evaluation() {
        let mut idx = TaskIndex::new(64, 3, 4, &[]);
        let mut done = Vec::new();
        for e in [30, 2, 63, 17, 45, 9] {
            idx.execute(SlotIndex(e));
            done.push(e);
            let q = task_quality(&task_with(64, &done), 3);
            assert_eq!(idx.quality(), q);
            assert!((idx.tree().q_prime() - q).abs() < 1e-9);
        }
    }
}
