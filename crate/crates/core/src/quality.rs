//! Finishing probabilities, interpolation error ratios and the entropy quality
//! of a task.
//!
//! An unexecuted slot is interpolated from its `k` nearest executed slots on the
//! timeline. Missing neighbors (fewer than `k` executed slots) count as being
//! `m` slots away. The error ratio turns into a finishing probability in
//! `[0, 1/m]`, and the task quality is the entropy `-Σ p log2 p` over all slots.

use crate::model::{SlotIndex, SlotState, TaskInstance};
use crate::{Error, Result};

/// One executed neighbor of a query slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub slot: usize,
    pub distance: usize,
    pub reliability: f64,
}

/// The `k` nearest executed slots of a query slot, sorted by distance with the
/// smaller slot index first on ties. `pad_count` neighbors are missing and sit
/// at distance `m`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborSet {
    pub entries: Vec<Neighbor>,
    pub pad_count: usize,
}

impl NeighborSet {
    pub fn k(&self) -> usize {
        self.entries.len() + self.pad_count
    }

    /// Sum of neighbor distances with padding counted at `m`.
    pub fn distance_sum(&self, m: usize) -> u64 {
        self.entries.iter().map(|e| e.distance as u64).sum::<u64>() + (self.pad_count * m) as u64
    }

    /// Distance to the k-th neighbor (`m` when padded).
    pub fn kth_distance(&self, m: usize) -> usize {
        if self.pad_count > 0 {
            m
        } else {
            self.entries.last().map(|e| e.distance).unwrap_or(m)
        }
    }

    /// Neighbor slots in ascending slot order.
    pub fn slots(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.entries.iter().map(|e| e.slot).collect();
        s.sort_unstable();
        s
    }

    /// Same neighbor slots, re-measured from `slot`.
    pub fn rebased(&self, slot: usize) -> NeighborSet {
        let mut entries: Vec<Neighbor> = self
            .entries
            .iter()
            .map(|e| Neighbor {
                distance: e.slot.abs_diff(slot),
                ..*e
            })
            .collect();
        entries.sort_by_key(|e| (e.distance, e.slot));
        NeighborSet {
            entries,
            pad_count: self.pad_count,
        }
    }
}

/// kNN of `slot` among the ascending `executed` slots. `reliability` maps an
/// executed slot to its worker's reliability.
pub(crate) fn knn_in_sorted(
    executed: &[usize],
    slot: usize,
    k: usize,
    reliability: impl Fn(usize) -> f64,
) -> NeighborSet {
    // `right` is the first executed slot >= slot
    let right_start = executed.partition_point(|&e| e < slot);
    let mut left = right_start;
    let mut right = right_start;
    let mut entries = Vec::with_capacity(k);
    while entries.len() < k {
        let l = (left > 0).then(|| executed[left - 1]);
        let r = (right < executed.len()).then(|| executed[right]);
        let pick = match (l, r) {
            (None, None) => break,
            (Some(a), None) => {
                left -= 1;
                a
            }
            (None, Some(b)) => {
                right += 1;
                b
            }
            (Some(a), Some(b)) => {
                if slot - a <= b - slot {
                    left -= 1;
                    a
                } else {
                    right += 1;
                    b
                }
            }
        };
        entries.push(Neighbor {
            slot: pick,
            distance: pick.abs_diff(slot),
            reliability: reliability(pick),
        });
    }
    let pad_count = k - entries.len();
    NeighborSet { entries, pad_count }
}

fn reliability_of(task: &TaskInstance) -> impl Fn(usize) -> f64 + '_ {
    move |s| match task.states[s - 1] {
        SlotState::Executed { reliability, .. } => reliability,
        SlotState::Null => 1.0,
    }
}

/// The `k` executed slots nearest to `slot`. An executed query slot is its own
/// nearest neighbor at distance 0.
pub fn knn_executed(task: &TaskInstance, slot: SlotIndex, k: usize) -> NeighborSet {
    let executed = task.executed_slots();
    knn_in_sorted(&executed, slot.0, k, reliability_of(task))
}

/// Finishing probability of an unexecuted slot whose padded kNN distances sum
/// to `distance_sum`. Every engine goes through this function so that
/// probabilities computed along different paths agree bit for bit.
#[inline]
pub fn probability_from_distance_sum(distance_sum: u64, k: usize, m: usize) -> f64 {
    let rho = distance_sum as f64 / (k * m) as f64;
    (1.0 - rho) / m as f64
}

/// Probability of an executed slot in the plain metric.
#[inline]
pub fn executed_probability(m: usize) -> f64 {
    probability_from_distance_sum(0, 1, m)
}

pub fn error_ratio(task: &TaskInstance, slot: SlotIndex, k: usize) -> f64 {
    if task.is_executed(slot) {
        return 0.0;
    }
    knn_executed(task, slot, k).distance_sum(task.m) as f64 / (k * task.m) as f64
}

pub fn finishing_probability(task: &TaskInstance, slot: SlotIndex, k: usize) -> f64 {
    if task.is_executed(slot) {
        return executed_probability(task.m);
    }
    probability_from_distance_sum(knn_executed(task, slot, k).distance_sum(task.m), k, task.m)
}

/// Reliability-weighted error ratio; padded neighbors carry reliability 1.
pub fn error_ratio_reliable(task: &TaskInstance, slot: SlotIndex, k: usize) -> f64 {
    if task.is_executed(slot) {
        return 0.0;
    }
    let ns = knn_executed(task, slot, k);
    reliable_ratio(&ns, k, task.m)
}

fn reliable_ratio(ns: &NeighborSet, k: usize, m: usize) -> f64 {
    let weighted: f64 = ns
        .entries
        .iter()
        .map(|e| e.reliability * e.distance as f64)
        .sum::<f64>()
        + (ns.pad_count * m) as f64;
    weighted / (k * m) as f64
}

/// Reliability-aware finishing probability, clamped below at zero.
pub fn finishing_probability_reliable(task: &TaskInstance, slot: SlotIndex, k: usize) -> f64 {
    let m = task.m;
    if let SlotState::Executed { reliability, .. } = task.state(slot) {
        return reliability / m as f64;
    }
    reliable_probability(&knn_executed(task, slot, k), k, m)
}

/// Reliability-aware probability of an unexecuted slot with neighbors `ns`.
pub(crate) fn reliable_probability(ns: &NeighborSet, k: usize, m: usize) -> f64 {
    let mean_reliability =
        (ns.entries.iter().map(|e| e.reliability).sum::<f64>() + ns.pad_count as f64) / k as f64;
    ((mean_reliability - reliable_ratio(ns, k, m)) / m as f64).max(0.0)
}

/// Probability used by the metric for `task`, honouring its reliability mode.
pub fn slot_probability(task: &TaskInstance, slot: SlotIndex, k: usize) -> f64 {
    if task.reliability_mode {
        finishing_probability_reliable(task, slot, k)
    } else {
        finishing_probability(task, slot, k)
    }
}

/// Per-slot probabilities, `out[j - 1]` for slot `j`.
pub fn slot_probabilities(task: &TaskInstance, k: usize) -> Vec<f64> {
    if task.reliability_mode {
        return (1..=task.m)
            .map(|j| finishing_probability_reliable(task, SlotIndex(j), k))
            .collect();
    }
    let executed = task.executed_slots();
    (1..=task.m)
        .map(|j| {
            if task.states[j - 1].is_executed() {
                executed_probability(task.m)
            } else {
                let ns = knn_in_sorted(&executed, j, k, |_| 1.0);
                probability_from_distance_sum(ns.distance_sum(task.m), k, task.m)
            }
        })
        .collect()
}

/// Entropy contribution `-p log2 p` of one slot, with `0 log 0 = 0`.
#[inline]
pub fn partial_quality(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

/// Task quality: the entropy of the slot probabilities, summed in slot order.
pub fn task_quality(task: &TaskInstance, k: usize) -> f64 {
    slot_probabilities(task, k)
        .into_iter()
        .fold(0.0, |acc, p| acc + partial_quality(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityWeights {
    pub spatial: f64,
    pub temporal: f64,
}

impl QualityWeights {
    pub fn new(spatial: f64, temporal: f64) -> Result<Self> {
        let ok = (0.0..=1.0).contains(&spatial)
            && (0.0..=1.0).contains(&temporal)
            && (spatial + temporal - 1.0).abs() <= 1e-12;
        if ok {
            Ok(QualityWeights { spatial, temporal })
        } else {
            Err(Error::InvalidWeights { spatial, temporal })
        }
    }

    pub fn temporal_only() -> Self {
        QualityWeights {
            spatial: 0.0,
            temporal: 1.0,
        }
    }
}

impl Default for QualityWeights {
    fn default() -> Self {
        QualityWeights {
            spatial: 0.3,
            temporal: 0.7,
        }
    }
}

/// Spatial error ratio of `tasks[index]` at `slot`: mean Euclidean distance to
/// the `k` nearest other tasks executed at the same slot, normalised by the
/// domain size. Missing neighbors sit at `domain_size`.
pub fn spatial_error_ratio(
    tasks: &[TaskInstance],
    index: usize,
    slot: SlotIndex,
    k: usize,
    domain_size: f64,
) -> Result<f64> {
    if domain_size <= 0.0 || !domain_size.is_finite() {
        return Err(Error::InvalidDomain(domain_size));
    }
    let me = &tasks[index];
    let mut dists: Vec<f64> = tasks
        .iter()
        .enumerate()
        .filter(|(i, t)| *i != index && slot.0 <= t.m && t.is_executed(slot))
        .map(|(_, t)| me.loc.distance(&t.loc).min(domain_size))
        .collect();
    dists.sort_by(f64::total_cmp);
    dists.truncate(k);
    let pads = k - dists.len();
    let total: f64 = dists.iter().sum::<f64>() + pads as f64 * domain_size;
    Ok(total / (k as f64 * domain_size))
}

pub fn combined_error_ratio(spatial: f64, temporal: f64, weights: QualityWeights) -> f64 {
    weights.spatial * spatial + weights.temporal * temporal
}

/// Spatiotemporal finishing probability `(1/m)(1 - ρ)` with
/// `ρ = w_s ρ_s + w_t ρ_t`. Executed slots keep `1/m`.
pub fn finishing_probability_spatiotemporal(
    tasks: &[TaskInstance],
    index: usize,
    slot: SlotIndex,
    k: usize,
    domain_size: f64,
    weights: QualityWeights,
) -> Result<f64> {
    let task = &tasks[index];
    if task.is_executed(slot) {
        return Ok(executed_probability(task.m));
    }
    let rs = spatial_error_ratio(tasks, index, slot, k, domain_size)?;
    let rt = error_ratio(task, slot, k);
    Ok((1.0 - combined_error_ratio(rs, rt, weights)) / task.m as f64)
}

/// Spatiotemporal quality of `tasks[index]`.
pub fn task_quality_spatiotemporal(
    tasks: &[TaskInstance],
    index: usize,
    k: usize,
    domain_size: f64,
    weights: QualityWeights,
) -> Result<f64> {
    let mut q = 0.0;
    for j in 1..=tasks[index].m {
        let p = finishing_probability_spatiotemporal(
            tasks,
            index,
            SlotIndex(j),
            k,
            domain_size,
            weights,
        )?;
        q += partial_quality(p);
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Point;

    fn task_with(m: usize, executed: &[usize]) -> TaskInstance {
        let mut t = TaskInstance::new(0, Point::default(), m);
        for &s in executed {
            t.execute(SlotIndex(s), 0, 1.0, 1.0);
        }
        t
    }

    /// Exhaustive scan: sort every executed slot by (distance, slot).
    fn scan_knn(task: &TaskInstance, slot: usize, k: usize) -> (Vec<(usize, usize)>, usize) {
        let mut all: Vec<(usize, usize)> = task
            .executed_slots()
            .into_iter()
            .map(|e| (e.abs_diff(slot), e))
            .collect();
        all.sort();
        all.truncate(k);
        let pads = k - all.len();
        (all.into_iter().map(|(d, s)| (s, d)).collect(), pads)
    }

    fn pairs(ns: &NeighborSet) -> Vec<(usize, usize)> {
        ns.entries.iter().map(|e| (e.slot, e.distance)).collect()
    }

    #[test]
    fn knn_worked_example() {
        let t = task_with(100, &[2, 4, 7, 9]);
        let ns = knn_executed(&t, SlotIndex(1), 2);
        assert_eq!(pairs(&ns), vec![(2, 1), (4, 3)]);
        assert_eq!(ns.pad_count, 0);
    }

    #[test]
    fn knn_empty_and_padded() {
        let t = task_with(10, &[]);
        let ns = knn_executed(&t, SlotIndex(4), 3);
        assert!(ns.entries.is_empty());
        assert_eq!(ns.pad_count, 3);

        let t = task_with(10, &[3]);
        let ns = knn_executed(&t, SlotIndex(5), 2);
        assert_eq!(pairs(&ns), vec![(3, 2)]);
        assert_eq!(ns.pad_count, 1);
    }

    #[test]
    fn knn_tie_prefers_smaller_slot() {
        let t = task_with(10, &[2, 6]);
        let ns = knn_executed(&t, SlotIndex(4), 1);
        assert_eq!(pairs(&ns), vec![(2, 2)]);
    }

    #[test]
    fn knn_matches_exhaustive_scan() {
        let t = task_with(30, &[1, 5, 6, 13, 20, 29]);
        for k in 1..=7 {
            for j in 1..=30 {
                let ns = knn_executed(&t, SlotIndex(j), k);
                let (expect, pads) = scan_knn(&t, j, k);
                assert_eq!(pairs(&ns), expect, "slot {j} k {k}");
                assert_eq!(ns.pad_count, pads);
            }
        }
    }

    #[test]
    fn error_ratio_examples() {
        let t = task_with(100, &[2, 4, 7, 9]);
        assert_eq!(error_ratio(&t, SlotIndex(1), 2), 0.02);
        assert_eq!(error_ratio(&t, SlotIndex(2), 2), 0.0);
        assert_eq!(error_ratio(&task_with(10, &[]), SlotIndex(3), 2), 1.0);
        let t = task_with(10, &[3, 8]);
        assert!((error_ratio(&t, SlotIndex(1), 2) - 0.45).abs() < 1e-15);
    }

    #[test]
    fn finishing_probability_examples() {
        let t = task_with(100, &[2, 4, 7, 9]);
        assert_eq!(finishing_probability(&t, SlotIndex(2), 2), 0.01);
        assert!((finishing_probability(&t, SlotIndex(1), 2) - 0.0098).abs() < 1e-15);
        assert_eq!(
            finishing_probability(&task_with(7, &[]), SlotIndex(3), 2),
            0.0
        );
    }

    #[test]
    fn reliable_variants() {
        let mut t = task_with(10, &[]);
        t.execute(SlotIndex(3), 1, 1.0, 0.5);
        t.execute(SlotIndex(8), 2, 1.0, 1.0);
        // slot 1: neighbours (3, d=2, λ=.5), (8, d=7, λ=1) -> (1 + 7) / 20
        assert!((error_ratio_reliable(&t, SlotIndex(1), 2) - 0.4).abs() < 1e-15);

        let mut zero = task_with(10, &[]);
        zero.execute(SlotIndex(3), 1, 1.0, 0.0);
        zero.execute(SlotIndex(8), 2, 1.0, 0.0);
        assert_eq!(error_ratio_reliable(&zero, SlotIndex(1), 2), 0.0);

        let mut ex = task_with(10, &[]);
        ex.execute(SlotIndex(4), 1, 1.0, 0.8);
        assert!((finishing_probability_reliable(&ex, SlotIndex(4), 2) - 0.08).abs() < 1e-15);

        assert_eq!(
            finishing_probability_reliable(&task_with(10, &[]), SlotIndex(2), 3),
            0.0
        );
    }

    #[test]
    fn reliable_degenerates_to_plain() {
        let t = task_with(40, &[3, 9, 10, 22, 37]);
        for k in 1..=4 {
            for j in 1..=40 {
                let s = SlotIndex(j);
                assert_eq!(error_ratio_reliable(&t, s, k), error_ratio(&t, s, k));
                assert_eq!(
                    finishing_probability_reliable(&t, s, k),
                    finishing_probability(&t, s, k)
                );
            }
        }
        let mut r = t.clone();
        r.reliability_mode = true;
        assert_eq!(task_quality(&r, 3), task_quality(&t, 3));
    }

    #[test]
    fn reliable_probability_with_low_reliability() {
        let mut t = task_with(10, &[]);
        t.execute(SlotIndex(9), 1, 1.0, 0.05);
        t.execute(SlotIndex(10), 2, 1.0, 0.05);
        // distances 8 and 9, both weighted by .05
        let want = (0.05 - 0.05 * 17.0 / 20.0) / 10.0;
        let got = finishing_probability_reliable(&t, SlotIndex(1), 2);
        assert!((got - want).abs() < 1e-15);
        assert!(got >= 0.0);
    }

    #[test]
    fn quality_extremes() {
        for m in [3, 8, 100, 500] {
            let full = task_with(m, &(1..=m).collect::<Vec<_>>());
            assert!((task_quality(&full, 3) - (m as f64).log2()).abs() <= 1e-12);
            assert_eq!(task_quality(&task_with(m, &[]), 3), 0.0);
        }
    }

    #[test]
    fn quality_direct_formula() {
        let t = task_with(10, &[3, 8]);
        let mut expect = 0.0;
        for j in 1..=10usize {
            let p: f64 = if j == 3 || j == 8 {
                0.1
            } else {
                let (d1, d2) = (j.abs_diff(3), j.abs_diff(8));
                let rho = (d1 + d2) as f64 / 20.0;
                0.1 * (1.0 - rho)
            };
            expect += -p * p.log2();
        }
        assert!((task_quality(&t, 2) - expect).abs() < 1e-12);
    }

    #[test]
    fn partial_quality_examples() {
        assert_eq!(partial_quality(0.0), 0.0);
        assert!((partial_quality(1.0 / 8.0) - 3.0 / 8.0).abs() < 1e-15);
        let p: f64 = 0.0098;
        assert_eq!(partial_quality(p), -p * p.log2());
    }

    #[test]
    fn spatial_and_combined_ratios() {
        let mut tasks = vec![
            TaskInstance::new(0, Point::new(0.0, 0.0), 5),
            TaskInstance::new(1, Point::new(20.0, 0.0), 5),
            TaskInstance::new(2, Point::new(0.0, 0.0), 5),
        ];
        assert_eq!(
            spatial_error_ratio(&tasks, 0, SlotIndex(2), 1, 100.0).unwrap(),
            1.0
        );
        tasks[1].execute(SlotIndex(2), 9, 1.0, 1.0);
        assert!(
            (spatial_error_ratio(&tasks, 0, SlotIndex(2), 1, 100.0).unwrap() - 0.2).abs() < 1e-15
        );
        tasks[2].execute(SlotIndex(2), 8, 1.0, 1.0);
        assert_eq!(
            spatial_error_ratio(&tasks, 0, SlotIndex(2), 1, 100.0).unwrap(),
            0.0
        );
        assert!(spatial_error_ratio(&tasks, 0, SlotIndex(2), 1, 0.0).is_err());

        let w = QualityWeights::new(0.3, 0.7).unwrap();
        assert!((combined_error_ratio(1.0, 0.0, w) - 0.3).abs() < 1e-15);
        assert_eq!(
            combined_error_ratio(0.9, 0.25, QualityWeights::temporal_only()),
            0.25
        );
        assert!(QualityWeights::new(0.5, 0.6).is_err());
    }

    #[test]
    fn spatiotemporal_two_part_form_agrees() {
        let mut tasks = vec![
            TaskInstance::new(0, Point::new(10.0, 10.0), 12),
            TaskInstance::new(1, Point::new(40.0, 30.0), 12),
        ];
        tasks[0].execute(SlotIndex(2), 1, 1.0, 1.0);
        tasks[0].execute(SlotIndex(9), 1, 1.0, 1.0);
        tasks[1].execute(SlotIndex(5), 2, 1.0, 1.0);
        let w = QualityWeights::default();
        let m = 12.0;
        for j in [1, 3, 5, 7, 12] {
            let s = SlotIndex(j);
            let p = finishing_probability_spatiotemporal(&tasks, 0, s, 2, 100.0, w).unwrap();
            let rs = spatial_error_ratio(&tasks, 0, s, 2, 100.0).unwrap();
            let rt = error_ratio(&tasks[0], s, 2);
            let two_part = (1.0 - w.temporal * rt) / m + (1.0 - w.spatial * rs) / m - 1.0 / m;
            assert!((p - two_part).abs() < 1e-15, "slot {j}");
        }
    }
}
