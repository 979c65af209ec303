//! Aggregated binary tree approximating the 1-D order-k Voronoi diagram of the
//! executed slots.
//!
//! Each node covers a slot segment `[l, r]` and stores the kNN sets of both
//! endpoints, the union of kNN sets of all slots below it and the summed
//! entropy contribution of those slots. Splitting stops when both endpoints
//! share a kNN set (the whole segment is then one Voronoi cell) or when the
//! segment is no longer than `t_s` slots.

use std::fmt::Write as _;

use crate::quality::{
    executed_probability, knn_in_sorted, partial_quality, probability_from_distance_sum,
    NeighborSet,
};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InfluenceRange {
    pub lo: usize,
    pub hi: usize,
}

impl InfluenceRange {
    pub fn contains(&self, slot: usize) -> bool {
        (self.lo..=self.hi).contains(&slot)
    }
}

#[derive(Debug, Clone)]
pub struct IndexNode {
    pub l: usize,
    pub r: usize,
    /// Executed slots appearing in the kNN set of at least one slot in `[l, r]`.
    pub k_set: Vec<usize>,
    pub knn_l: NeighborSet,
    pub knn_r: NeighborSet,
    pub q_prime: f64,
    pub children: Option<(NodeId, NodeId)>,
    /// Leaf closed because both endpoints share their kNN set.
    pub is_cell: bool,
}

impl IndexNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn len(&self) -> usize {
        self.r - self.l + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Slot-level view kept alongside the tree: padded kNN distance sum, k-th
/// neighbor distance and finishing probability of every slot. For an executed
/// slot the neighbor set includes the slot itself.
#[derive(Debug, Clone)]
pub(crate) struct SlotView {
    pub executed: Vec<bool>,
    pub distance_sum: Vec<u64>,
    pub kth: Vec<usize>,
    pub prob: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct VoronoiTree {
    m: usize,
    k: usize,
    t_s: usize,
    nodes: Vec<IndexNode>,
    free: Vec<NodeId>,
    root: NodeId,
    /// Ascending executed slots.
    executed: Vec<usize>,
    pub(crate) slots: SlotView,
}

/// Slot whose kNN bookkeeping changed during an update, with its k-th neighbor
/// distance before the change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Changed {
    pub slot: usize,
    pub old_kth: usize,
}

fn same_cell(a: &NeighborSet, b: &NeighborSet) -> bool {
    a.pad_count == b.pad_count && a.slots() == b.slots()
}

impl VoronoiTree {
    /// Builds the tree for a task with the given executed slots (any order).
    pub fn build(m: usize, k: usize, t_s: usize, executed: &[usize]) -> Self {
        assert!(m >= 1 && k >= 1 && t_s >= 1);
        let mut ex = executed.to_vec();
        ex.sort_unstable();
        ex.dedup();
        let mut flags = vec![false; m + 1];
        for &e in &ex {
            flags[e] = true;
        }
        let mut tree = VoronoiTree {
            m,
            k,
            t_s,
            nodes: Vec::new(),
            free: Vec::new(),
            root: 0,
            executed: ex,
            slots: SlotView {
                executed: flags,
                distance_sum: vec![0; m + 1],
                kth: vec![0; m + 1],
                prob: vec![0.0; m + 1],
            },
        };
        let knn_l = tree.knn(1);
        let mut sink = Vec::new();
        tree.root = tree.build_subtree(1, m, knn_l, &mut sink);
        tree
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn t_s(&self) -> usize {
        self.t_s
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &IndexNode {
        &self.nodes[id]
    }

    pub fn executed(&self) -> &[usize] {
        &self.executed
    }

    pub fn is_executed(&self, slot: usize) -> bool {
        self.slots.executed[slot]
    }

    pub fn probability(&self, slot: usize) -> f64 {
        self.slots.prob[slot]
    }

    /// Root aggregate of the entropy contributions.
    pub fn q_prime(&self) -> f64 {
        self.nodes[self.root].q_prime
    }

    fn knn(&self, slot: usize) -> NeighborSet {
        knn_in_sorted(&self.executed, slot, self.k, |_| 1.0)
    }

    pub fn influence_range(&self, id: NodeId) -> InfluenceRange {
        let n = &self.nodes[id];
        let kl = n.knn_l.kth_distance(self.m);
        let kr = n.knn_r.kth_distance(self.m);
        InfluenceRange {
            lo: n.l.saturating_sub(kl).max(1),
            hi: (n.r + kr).min(self.m),
        }
    }

    /// Executed slots between the leftmost neighbor of `l` and the rightmost
    /// neighbor of `r`. kNN sets are windows of consecutive executed slots that
    /// only move right as the query moves right, so this is exactly the union
    /// of kNN sets over `[l, r]`.
    fn k_set(&self, knn_l: &NeighborSet, knn_r: &NeighborSet) -> Vec<usize> {
        let lo = knn_l
            .entries
            .iter()
            .chain(&knn_r.entries)
            .map(|e| e.slot)
            .min();
        let hi = knn_l
            .entries
            .iter()
            .chain(&knn_r.entries)
            .map(|e| e.slot)
            .max();
        match (lo, hi) {
            (Some(lo), Some(hi)) => {
                let a = self.executed.partition_point(|&e| e < lo);
                let b = self.executed.partition_point(|&e| e <= hi);
                self.executed[a..b].to_vec()
            }
            _ => Vec::new(),
        }
    }

    fn alloc(&mut self, node: IndexNode) -> NodeId {
        if let Some(id) = self.free.pop() {
            self.nodes[id] = node;
            id
        } else {
            self.nodes.push(node);
            self.nodes.len() - 1
        }
    }

    fn release(&mut self, id: NodeId) {
        if let Some((a, b)) = self.nodes[id].children.take() {
            self.release(a);
            self.release(b);
        }
        self.nodes[id].k_set = Vec::new();
        self.free.push(id);
    }

    fn split_point(l: usize, r: usize) -> usize {
        (l + r).div_ceil(2)
    }

    fn build_subtree(
        &mut self,
        l: usize,
        r: usize,
        knn_l: NeighborSet,
        changed: &mut Vec<Changed>,
    ) -> NodeId {
        let knn_r = if l == r { knn_l.clone() } else { self.knn(r) };
        let k_set = self.k_set(&knn_l, &knn_r);
        let is_cell = same_cell(&knn_l, &knn_r);
        let id = self.alloc(IndexNode {
            l,
            r,
            k_set,
            knn_l,
            knn_r,
            q_prime: 0.0,
            children: None,
            is_cell,
        });
        self.settle(id, changed);
        id
    }

    /// Splits or closes node `id` according to the stopping conditions and
    /// recomputes its aggregate. The node's quadruple must be current.
    fn settle(&mut self, id: NodeId, changed: &mut Vec<Changed>) {
        let (l, r) = (self.nodes[id].l, self.nodes[id].r);
        if self.nodes[id].is_cell || r - l < self.t_s {
            self.refresh_leaf(id, changed);
            return;
        }
        let mid = Self::split_point(l, r);
        let left_knn = self.nodes[id].knn_l.clone();
        let right_knn = self.knn(mid);
        let a = self.build_subtree(l, mid - 1, left_knn, changed);
        let b = self.build_subtree(mid, r, right_knn, changed);
        self.nodes[id].children = Some((a, b));
        self.nodes[id].q_prime = self.nodes[a].q_prime + self.nodes[b].q_prime;
    }

    /// Recomputes the slot view for every slot of a leaf.
    fn refresh_leaf(&mut self, id: NodeId, changed: &mut Vec<Changed>) {
        let (m, k) = (self.m, self.k);
        let node = &self.nodes[id];
        let mut q = 0.0;
        for j in node.l..=node.r {
            let ns = if node.is_cell {
                node.knn_l.rebased(j)
            } else {
                knn_in_sorted(&node.k_set, j, k, |_| 1.0)
            };
            let dsum = ns.distance_sum(m);
            let kth = ns.kth_distance(m);
            let exec = self.slots.executed[j];
            let p = if exec {
                executed_probability(m)
            } else {
                probability_from_distance_sum(dsum, k, m)
            };
            if p != self.slots.prob[j] || dsum != self.slots.distance_sum[j] {
                changed.push(Changed {
                    slot: j,
                    old_kth: self.slots.kth[j],
                });
            }
            self.slots.distance_sum[j] = dsum;
            self.slots.kth[j] = kth;
            self.slots.prob[j] = p;
            q += partial_quality(p);
        }
        self.nodes[id].q_prime = q;
    }

    /// Marks `slot` executed and updates every node whose influence range
    /// contains it. Subtrees under an unaffected node are skipped. Returns the
    /// slots whose bookkeeping changed.
    pub(crate) fn execute(&mut self, slot: usize) -> Vec<Changed> {
        assert!((1..=self.m).contains(&slot));
        let mut changed = Vec::new();
        if self.slots.executed[slot] {
            return changed;
        }
        let pos = self.executed.partition_point(|&e| e < slot);
        self.executed.insert(pos, slot);
        self.slots.executed[slot] = true;
        self.update_node(self.root, slot, &mut changed);
        changed
    }

    fn update_node(&mut self, id: NodeId, slot: usize, changed: &mut Vec<Changed>) {
        if !self.influence_range(id).contains(slot) {
            return;
        }
        let (l, r) = (self.nodes[id].l, self.nodes[id].r);
        let knn_l = self.knn(l);
        let knn_r = if l == r { knn_l.clone() } else { self.knn(r) };
        let k_set = self.k_set(&knn_l, &knn_r);
        let is_cell = same_cell(&knn_l, &knn_r);
        {
            let n = &mut self.nodes[id];
            n.knn_l = knn_l;
            n.knn_r = knn_r;
            n.k_set = k_set;
            n.is_cell = is_cell;
        }
        match self.nodes[id].children {
            Some((a, b)) if !is_cell => {
                self.update_node(a, slot, changed);
                self.update_node(b, slot, changed);
                self.nodes[id].q_prime = self.nodes[a].q_prime + self.nodes[b].q_prime;
            }
            Some(_) => {
                // the segment collapsed into a single cell
                let (a, b) = self.nodes[id].children.take().unwrap();
                self.release(a);
                self.release(b);
                self.refresh_leaf(id, changed);
            }
            None => self.settle(id, changed),
        }
    }

    /// kNN of `slot` read from the tree: a cell leaf answers with its shared
    /// set, a size-bounded leaf searches its `k_set`.
    pub fn query_knn(&self, slot: usize) -> NeighborSet {
        let id = self.leaf_of(slot);
        let n = &self.nodes[id];
        if n.is_cell {
            n.knn_l.rebased(slot)
        } else {
            knn_in_sorted(&n.k_set, slot, self.k, |_| 1.0)
        }
    }

    pub fn leaf_of(&self, slot: usize) -> NodeId {
        let mut id = self.root;
        while let Some((a, b)) = self.nodes[id].children {
            id = if slot <= self.nodes[a].r { a } else { b };
        }
        id
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            match self.nodes[id].children {
                Some((a, b)) => {
                    stack.push(b);
                    stack.push(a);
                }
                None => out.push(id),
            }
        }
        out
    }

    /// Every live node in pre-order.
    pub fn nodes_preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            if let Some((a, b)) = self.nodes[id].children {
                stack.push(b);
                stack.push(a);
            }
        }
        out
    }

    /// Largest number of size-driven splits on any root-to-leaf path. A split
    /// counts when the node was not a cell.
    pub fn max_split_depth(&self) -> usize {
        fn walk(t: &VoronoiTree, id: NodeId) -> usize {
            match t.nodes[id].children {
                Some((a, b)) => 1 + walk(t, a).max(walk(t, b)),
                None => 0,
            }
        }
        walk(self, self.root)
    }

    /// Indented text rendering of the tree.
    pub fn dump(&self) -> String {
        fn fmt_set(ns: &NeighborSet) -> String {
            let mut parts: Vec<String> = ns.entries.iter().map(|e| e.slot.to_string()).collect();
            parts.extend(std::iter::repeat_n("_".to_string(), ns.pad_count));
            format!("{{{}}}", parts.join(","))
        }
        let mut out = String::new();
        let mut stack = vec![(self.root, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            let n = &self.nodes[id];
            let ir = self.influence_range(id);
            let kind = match (n.children.is_some(), n.is_cell) {
                (true, _) => "node",
                (false, true) => "cell",
                (false, false) => "leaf",
            };
            let kset: Vec<String> = n.k_set.iter().map(ToString::to_string).collect();
            let _ = writeln!(
                out,
                "{:indent$}[{},{}] {} k-set={{{}}} knn(l)={} knn(r)={} q'={:.6} range=[{},{}]",
                "",
                n.l,
                n.r,
                kind,
                kset.join(","),
                fmt_set(&n.knn_l),
                fmt_set(&n.knn_r),
                n.q_prime,
                ir.lo,
                ir.hi,
                indent = depth * 2
            );
            if let Some((a, b)) = n.children {
                stack.push((b, depth + 1));
                stack.push((a, depth + 1));
            }
        }
        out
    }
}
