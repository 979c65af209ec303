//! Range aggregates over per-slot search data, used to bound the heuristic of
//! any slot segment in logarithmic time.

/// Search data of one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SlotEntry {
    /// Candidate cost; infinite for executed slots and slots without a worker.
    pub cost: f64,
    /// Upper bound on the gain this slot receives when any other slot executes.
    pub gain_bound: f64,
    /// Own gain when executed, minus `gain_bound`.
    pub self_excess: f64,
    /// Cached exact quality gain, when still valid.
    pub cached_gain: Option<f64>,
}

impl SlotEntry {
    pub const EMPTY: SlotEntry = SlotEntry {
        cost: f64::INFINITY,
        gain_bound: 0.0,
        self_excess: 0.0,
        cached_gain: None,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Aggregate {
    /// Cheapest cost among candidate slots.
    pub min_cost: f64,
    /// Cheapest cost among candidate slots without a cached gain.
    pub min_cost_open: f64,
    pub max_excess_open: f64,
    /// Best cached heuristic among candidate slots.
    pub max_cached: f64,
    pub gain_bound_sum: f64,
    pub candidates: usize,
}

impl Aggregate {
    const IDENTITY: Aggregate = Aggregate {
        min_cost: f64::INFINITY,
        min_cost_open: f64::INFINITY,
        max_excess_open: f64::NEG_INFINITY,
        max_cached: f64::NEG_INFINITY,
        gain_bound_sum: 0.0,
        candidates: 0,
    };

    fn leaf(e: &SlotEntry) -> Aggregate {
        let mut a = Aggregate::IDENTITY;
        a.gain_bound_sum = e.gain_bound;
        if e.cost.is_finite() {
            a.min_cost = e.cost;
            a.candidates = 1;
            match e.cached_gain {
                Some(g) => a.max_cached = g / e.cost.max(crate::model::COST_EPSILON),
                None => {
                    a.min_cost_open = e.cost;
                    a.max_excess_open = e.self_excess;
                }
            }
        }
        a
    }

    fn merge(a: &Aggregate, b: &Aggregate) -> Aggregate {
        Aggregate {
            min_cost: a.min_cost.min(b.min_cost),
            min_cost_open: a.min_cost_open.min(b.min_cost_open),
            max_excess_open: a.max_excess_open.max(b.max_excess_open),
            max_cached: a.max_cached.max(b.max_cached),
            gain_bound_sum: a.gain_bound_sum + b.gain_bound_sum,
            candidates: a.candidates + b.candidates,
        }
    }
}

/// Bottom-up segment tree over slots `1..=m`.
#[derive(Debug, Clone)]
pub(crate) struct SlotBounds {
    size: usize,
    tree: Vec<Aggregate>,
}

impl SlotBounds {
    pub fn new(m: usize) -> Self {
        let size = m.next_power_of_two();
        SlotBounds {
            size,
            tree: vec![Aggregate::IDENTITY; 2 * size],
        }
    }

    pub fn set(&mut self, slot: usize, entry: &SlotEntry) {
        let mut i = self.size + slot - 1;
        self.tree[i] = Aggregate::leaf(entry);
        while i > 1 {
            i /= 2;
            self.tree[i] = Aggregate::merge(&self.tree[2 * i], &self.tree[2 * i + 1]);
        }
    }

    /// Aggregate over slots `l..=r`.
    pub fn query(&self, l: usize, r: usize) -> Aggregate {
        let mut left = Aggregate::IDENTITY;
        let mut right = Aggregate::IDENTITY;
        let mut lo = self.size + l - 1;
        let mut hi = self.size + r;
        while lo < hi {
            if lo & 1 == 1 {
                left = Aggregate::merge(&left, &self.tree[lo]);
                lo += 1;
            }
            if hi & 1 == 1 {
                hi -= 1;
                right = Aggregate::merge(&self.tree[hi], &right);
            }
            lo /= 2;
            hi /= 2;
        }
        Aggregate::merge(&left, &right)
    }
}
