//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion outside `KNOWN_RED` fails.

mod common;

use std::time::Instant;

use rand::Rng;
use tcsc::knn_index::TaskIndex;
use tcsc::model::Budget;
use tcsc::multi_assign::{
    build_conflict_graph, joint_brute_force, mmqm_assign, msqm_group_parallel, msqm_serial,
    msqm_task_parallel, random_multi_assign, Objective, ParallelMode, JOINT_CAP,
};
use tcsc::quality::{error_ratio, finishing_probability, knn_executed, task_quality};
use tcsc::single_assign::{
    brute_force_optimal, cheapest_candidates, greedy_assign, greedy_assign_indexed, BRUTE_FORCE_CAP,
};
use tcsc::{Point, SlotIndex, TaskInstance, Worker, WorkerPool};

use common::{instance, rng, task_with, tiny};

const RATIO: f64 = 0.3935;

/// Criteria that cannot hold as stated. Their lines still print FAIL; they
/// only do not change the exit status. Criterion 3 asks for q_min to be
/// submodular, which fails whenever adding a slot to a non-minimal task is
/// worth nothing until the other tasks catch up.
const KNOWN_RED: [u32; 1] = [3];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn approximation_ratio() -> Verdict {
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for seed in 0..200 {
        let mut r = rng(1000 + seed);
        let m = r.random_range(3..=10);
        let t = tiny(&mut r, 1, m, 8);
        let task = &t.tasks[0];
        let (greedy, _) = greedy_assign(task, &t.pool, t.budget, t.k).unwrap();
        let (_, opt) = brute_force_optimal(task, &t.pool, t.budget, t.k, BRUTE_FORCE_CAP).unwrap();
        if opt > 0.0 {
            let ratio = greedy.final_quality / opt;
            worst = worst.min(ratio);
            if ratio < RATIO {
                failures += 1;
            }
        }
    }
    verdict(
        failures == 0,
        format!("200 instances, worst greedy/optimal {worst:.4}, {failures} below {RATIO}"),
    )
}

fn metric_ground_truth() -> Verdict {
    let t = task_with(100, &[49, 53]);
    let rho = error_ratio(&t, SlotIndex(50), 2);
    let full_ok = [3usize, 10, 100, 1000].iter().all(|&m| {
        let all: Vec<usize> = (1..=m).collect();
        (task_quality(&task_with(m, &all), 3) - (m as f64).log2()).abs() <= 1e-12
    });
    let null = task_quality(&task_with(100, &[]), 2);
    verdict(
        rho == 0.02 && full_ok && null == 0.0,
        format!("error ratio {rho}, full execution = log2 m: {full_ok}, all-null quality {null}"),
    )
}

/// Nested executed sets A ⊆ B and a slot s outside B.
fn nested(r: &mut rand_chacha::ChaCha8Rng, m: usize) -> (Vec<usize>, Vec<usize>, usize) {
    let density = r.random_range(0.05..0.6);
    let b = common::random_slots(r, m, density);
    let a: Vec<usize> = b.iter().copied().filter(|_| r.random_bool(0.5)).collect();
    let free: Vec<usize> = (1..=m).filter(|s| !b.contains(s)).collect();
    let s = if free.is_empty() {
        0
    } else {
        free[r.random_range(0..free.len())]
    };
    (a, b, s)
}

fn with(v: &[usize], s: usize) -> Vec<usize> {
    let mut out = v.to_vec();
    out.push(s);
    out
}

#[derive(Default)]
struct Tally {
    trials: usize,
    monotone: usize,
    submodular: usize,
    example: Option<String>,
}

impl Tally {
    /// Values are f(A), f(A+s), f(B), f(B+s).
    fn check(&mut self, fa: f64, fas: f64, fb: f64, fbs: f64, what: impl FnOnce() -> String) {
        const EPS: f64 = 1e-12;
        self.trials += 1;
        if fb < fa - EPS || fas < fa - EPS || fbs < fb - EPS {
            self.monotone += 1;
        }
        if fas - fa < fbs - fb - EPS {
            self.submodular += 1;
            if self.example.is_none() {
                self.example = Some(what());
            }
        }
    }
}

fn submodularity() -> Verdict {
    let mut p = Tally::default();
    let mut q = Tally::default();
    let mut sum = Tally::default();
    let mut min = Tally::default();
    let mut r = rng(3);
    while p.trials < 1000 {
        let m = r.random_range(3..=40);
        let k = r.random_range(1..=4);
        let (a, b, s) = nested(&mut r, m);
        if s == 0 {
            continue;
        }
        let j = SlotIndex(r.random_range(1..=m));
        let f = |e: &[usize]| finishing_probability(&task_with(m, e), j, k);
        p.check(f(&a), f(&with(&a, s)), f(&b), f(&with(&b, s)), String::new);
        let g = |e: &[usize]| task_quality(&task_with(m, e), k);
        q.check(g(&a), g(&with(&a, s)), g(&b), g(&with(&b, s)), String::new);
    }
    // multi-task sets: (task, slot) pairs over three tasks
    while sum.trials < 1000 {
        let m = r.random_range(3..=20);
        let k = r.random_range(1..=3);
        let n = 3;
        let pairs_b: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (1..=m).map(move |j| (i, j)))
            .filter(|_| r.random_bool(0.3))
            .collect();
        let pairs_a: Vec<(usize, usize)> = pairs_b
            .iter()
            .copied()
            .filter(|_| r.random_bool(0.5))
            .collect();
        let free: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (1..=m).map(move |j| (i, j)))
            .filter(|x| !pairs_b.contains(x))
            .collect();
        if free.is_empty() {
            continue;
        }
        let extra = free[r.random_range(0..free.len())];
        let qualities = |set: &[(usize, usize)]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let slots: Vec<usize> = set
                        .iter()
                        .filter(|(t, _)| *t == i)
                        .map(|(_, j)| *j)
                        .collect();
                    task_quality(&task_with(m, &slots), k)
                })
                .collect()
        };
        let plus = |set: &[(usize, usize)]| {
            let mut v = set.to_vec();
            v.push(extra);
            v
        };
        let (qa, qas, qb, qbs) = (
            qualities(&pairs_a),
            qualities(&plus(&pairs_a)),
            qualities(&pairs_b),
            qualities(&plus(&pairs_b)),
        );
        let s = Objective::Sum;
        sum.check(
            s.value(&qa),
            s.value(&qas),
            s.value(&qb),
            s.value(&qbs),
            String::new,
        );
        let mn = Objective::Min;
        min.check(
            mn.value(&qa),
            mn.value(&qas),
            mn.value(&qb),
            mn.value(&qbs),
            || {
                format!(
                "m={m} k={k} A={pairs_a:?} B={pairs_b:?} add {extra:?}: gains {} at A < {} at B",
                mn.value(&qas) - mn.value(&qa),
                mn.value(&qbs) - mn.value(&qb)
            )
            },
        );
    }
    let tallies = [("p", &p), ("q", &q), ("q_sum", &sum), ("q_min", &min)];
    let pass = tallies
        .iter()
        .all(|(_, t)| t.monotone == 0 && t.submodular == 0);
    let mut detail = tallies
        .iter()
        .map(|(n, t)| {
            format!(
                "{n}: {} trials {}/{} violations",
                t.trials, t.monotone, t.submodular
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    detail.push_str(" (monotone/submodular)");
    if let Some(ex) = &min.example {
        detail.push_str(&format!("\n       q_min counterexample: {ex}"));
    }
    verdict(pass, detail)
}

fn index_exactness() -> Verdict {
    let mut instances = 0;
    let mut trace_mismatch = 0;
    let mut knn_mismatch = 0;
    let mut bound_checks = 0u64;
    let mut bound_violations = 0;
    for (mi, &m) in [50usize, 200, 1000].iter().enumerate() {
        for (ti, &t_s) in [1usize, 4, 16].iter().enumerate() {
            for rep in 0..12 {
                let seed = 10_000 + (mi * 100 + ti * 20 + rep) as u64;
                let mut r = rng(seed);
                let (tasks, pool) = instance(seed, m, 1, 2 * m);
                let k = r.random_range(1..=4);
                let budget = r.random_range(20.0..150.0);
                let task = &tasks[0];
                let (pa, ta) = greedy_assign(task, &pool, budget, k).unwrap();
                let (pb, tb) = greedy_assign_indexed(task, &pool, budget, k, t_s).unwrap();
                instances += 1;
                if ta.commits() != tb.commits() || pa != pb {
                    trace_mismatch += 1;
                }
                let (checks, bad, knn_bad) = audit_index(task, &pool, budget, k, t_s, &mut r);
                bound_checks += checks;
                bound_violations += bad;
                knn_mismatch += knn_bad;
            }
        }
    }
    verdict(
        trace_mismatch == 0 && knn_mismatch == 0 && bound_violations == 0,
        format!(
            "{instances} instances: {trace_mismatch} trace mismatches, {knn_mismatch} kNN mismatches, \
             {bound_violations} bound violations in {bound_checks} (node, slot) checks"
        ),
    )
}

/// Steps an index through greedy commits, checking kNN queries against the
/// naive scan and node bounds against exact heuristics at every step.
fn audit_index(
    task: &TaskInstance,
    pool: &WorkerPool,
    budget: f64,
    k: usize,
    t_s: usize,
    r: &mut rand_chacha::ChaCha8Rng,
) -> (u64, usize, usize) {
    let mut idx = TaskIndex::from_task(task, k, t_s).unwrap();
    let mut naive = task.clone();
    for (j, c) in cheapest_candidates(task, pool)
        .into_iter()
        .enumerate()
        .skip(1)
    {
        idx.set_cost(SlotIndex(j), c.map(|c| c.cost));
    }
    let mut b = Budget::new(budget);
    let (mut checks, mut bad, mut knn_bad) = (0u64, 0usize, 0usize);
    let m = task.m;
    loop {
        for j in 1..=m {
            if idx.query_knn(SlotIndex(j)) != knn_executed(&naive, SlotIndex(j), k) {
                knn_bad += 1;
            }
        }
        let nodes = idx.tree().nodes_preorder();
        for _ in 0..nodes.len().min(24) {
            let node = nodes[r.random_range(0..nodes.len())];
            let ub = idx.node_upper_bound(node, &b);
            let (l, rr) = (idx.tree().node(node).l, idx.tree().node(node).r);
            for j in l..=rr {
                let slot = SlotIndex(j);
                let Some(cost) = idx.cost(slot) else { continue };
                if idx.is_executed(slot) || !b.affords(cost) {
                    continue;
                }
                checks += 1;
                if idx.exact_heuristic(slot).unwrap() > ub {
                    bad += 1;
                }
            }
        }
        let Some(sel) = idx.find_max_heuristic(&b) else {
            break;
        };
        b.charge(sel.cost);
        idx.execute(sel.slot);
        naive.execute(sel.slot, 0, sel.cost, 1.0);
    }
    (checks, bad, knn_bad)
}

fn cell_lemma() -> Verdict {
    let (mut leaves, mut slots, mut bad) = (0usize, 0usize, 0usize);
    for seed in 0..300 {
        let mut r = rng(20_000 + seed);
        let m = r.random_range(3..=200);
        let k = r.random_range(1..=5);
        let t_s = [1, 2, 4, 16][r.random_range(0..4)];
        let density = r.random_range(0.0..0.3);
        let ex = common::random_slots(&mut r, m, density);
        let task = task_with(m, &ex);
        let tree = tcsc::knn_index::VoronoiTree::build(m, k, t_s, &ex);
        for id in tree.leaves() {
            let n = tree.node(id);
            if !n.is_cell {
                continue;
            }
            leaves += 1;
            for j in n.l..=n.r {
                slots += 1;
                let ns = knn_executed(&task, SlotIndex(j), k);
                if ns.slots() != n.knn_l.slots() || ns.pad_count != n.knn_l.pad_count {
                    bad += 1;
                }
            }
        }
    }
    verdict(
        bad == 0 && leaves > 0,
        format!("{leaves} cell leaves, {slots} interior slots, {bad} mismatches"),
    )
}

fn speedup() -> Verdict {
    let (tasks, pool) = instance(77, 2000, 1, 10_000);
    let task = &tasks[0];
    let t0 = Instant::now();
    let (pa, ta) = greedy_assign(task, &pool, 100.0, 3).unwrap();
    let naive = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (pb, tb) = greedy_assign_indexed(task, &pool, 100.0, 3, 4).unwrap();
    let indexed = t1.elapsed().as_secs_f64();
    let factor = naive / indexed;
    let same = pa == pb && ta.commits() == tb.commits();
    verdict(
        factor >= 10.0 && same,
        format!(
            "m=2000: direct {:.3}s, indexed {:.4}s, speedup {factor:.1}x, same plan {same}, \
             pruning ratio {:.1}% over {} commits",
            naive,
            indexed,
            tb.stats.pruning_ratio() * 100.0,
            tb.iterations.len()
        ),
    )
}

fn parallel_determinism() -> Verdict {
    let (mut instances, mut mismatches, mut opp_runs, mut opp_bad) = (0, 0, 0, 0);
    for seed in 0..50u64 {
        let mut r = rng(30_000 + seed);
        let m = r.random_range(20..=200);
        let n = r.random_range(2..=20);
        let (tasks, pool) = instance(30_000 + seed, m, n, r.random_range(m / 2..=3 * m));
        let budget = r.random_range(20.0..200.0);
        let k = r.random_range(1..=3);
        let serial = msqm_serial(&tasks, &pool, budget, k, 4).unwrap();
        instances += 1;
        for cores in [1, 2, 4, 8] {
            let par = msqm_task_parallel(
                &tasks,
                &pool,
                budget,
                k,
                4,
                cores,
                ParallelMode::Deterministic,
            )
            .unwrap();
            if par.plan != serial.plan || par.qualities != serial.qualities {
                mismatches += 1;
            }
            let opp = msqm_task_parallel(
                &tasks,
                &pool,
                budget,
                k,
                4,
                cores,
                ParallelMode::Opportunistic,
            )
            .unwrap();
            opp_runs += 1;
            let registered = opp
                .plan
                .steps
                .iter()
                .all(|s| pool.workers_at(s.slot).iter().any(|w| w.id == s.worker));
            if opp.plan.recomputed_spent() > budget || !opp.plan.has_unique_claims() || !registered
            {
                opp_bad += 1;
            }
        }
    }
    verdict(
        mismatches == 0 && opp_bad == 0,
        format!(
            "{instances} instances x cores {{1,2,4,8}}: {mismatches} deterministic mismatches; \
             {opp_runs} opportunistic runs, {opp_bad} over budget or double-claimed"
        ),
    )
}

fn quality_ordering() -> Verdict {
    let mut acc = [[0.0f64; 2]; 3];
    for seed in 0..20u64 {
        let (tasks, pool) = instance(40_000 + seed, 100, 10, 2000);
        let outs = [
            msqm_serial(&tasks, &pool, 100.0, 3, 4).unwrap(),
            mmqm_assign(&tasks, &pool, 100.0, 3, 4).unwrap(),
            random_multi_assign(&tasks, &pool, 100.0, 3, seed),
        ];
        for (a, o) in acc.iter_mut().zip(&outs) {
            a[0] += o.q_sum() / 20.0;
            a[1] += o.q_min() / 20.0;
        }
    }
    let [msqm, mmqm, rand] = acc;
    verdict(
        msqm[0] > rand[0] && mmqm[0] > rand[0] && msqm[1] > rand[1] && mmqm[1] > rand[1],
        format!(
            "mean q_sum msqm {:.3} mmqm {:.3} rand {:.3}; mean q_min msqm {:.3} mmqm {:.3} rand {:.3}",
            msqm[0], mmqm[0], rand[0], msqm[1], mmqm[1], rand[1]
        ),
    )
}

fn mmqm_behaviour() -> Verdict {
    let (mut runs, mut drops) = (0, 0);
    for seed in 0..60u64 {
        let mut r = rng(50_000 + seed);
        let m = r.random_range(10..=150);
        let (tasks, pool) = instance(50_000 + seed, m, r.random_range(2..=12), 2 * m);
        let out = mmqm_assign(&tasks, &pool, r.random_range(10.0..150.0), 2, 4).unwrap();
        let mut state = tasks.clone();
        let mut last = Objective::Min.value(&vec![0.0; state.len()]);
        for step in &out.plan.steps {
            let t = state.iter_mut().find(|t| t.id == step.task).unwrap();
            t.execute(step.slot, step.worker, step.cost, 1.0);
            let now =
                Objective::Min.value(&state.iter().map(|t| task_quality(t, 2)).collect::<Vec<_>>());
            if now < last {
                drops += 1;
            }
            last = now;
        }
        runs += 1;
    }
    let (mut tiny_runs, mut worst, mut below) = (0, f64::INFINITY, 0);
    for seed in 0..150u64 {
        let mut r = rng(60_000 + seed);
        let n = r.random_range(2..=3);
        let m = r.random_range(3..=6);
        let t = tiny(&mut r, n, m, 12 / n);
        let out = mmqm_assign(&t.tasks, &t.pool, t.budget, t.k, 2).unwrap();
        let (_, opt) =
            joint_brute_force(&t.tasks, &t.pool, t.budget, t.k, Objective::Min, JOINT_CAP).unwrap();
        tiny_runs += 1;
        if opt > 0.0 {
            let ratio = out.q_min() / opt;
            worst = worst.min(ratio);
            if ratio < RATIO {
                below += 1;
            }
        }
    }
    verdict(
        drops == 0 && below == 0,
        format!(
            "{runs} runs, {drops} drops of the replayed minimum; {tiny_runs} tiny instances, \
             worst q_min ratio {worst:.4}, {below} below {RATIO}"
        ),
    )
}

/// Three tasks on a line with four workers present at every slot: w1 is
/// nearest to both τ2 and τ3, w2 is τ1's nearest and τ3's second nearest.
fn figure_four() -> (Vec<TaskInstance>, WorkerPool) {
    let m = 3;
    let tasks = vec![
        TaskInstance::new(1, Point::new(5.0, 0.0), m),
        TaskInstance::new(2, Point::new(0.0, 0.0), m),
        TaskInstance::new(3, Point::new(2.0, 0.0), m),
    ];
    let spots = [(1, 1.0, 0.1), (2, 4.0, 0.0), (3, -2.0, 0.0), (4, 7.0, 0.0)];
    let pool = WorkerPool::from_workers(
        (1..=m).flat_map(|j| spots.map(|(id, x, y)| Worker::new(id, j, Point::new(x, y)))),
    );
    (tasks, pool)
}

fn conflict_graph_soundness() -> Verdict {
    let (mut instances, mut contended, mut lane_bad) = (0, 0, 0);
    for seed in 0..120u64 {
        let mut r = rng(70_000 + seed);
        let m = r.random_range(5..=60);
        let n = r.random_range(2..=15);
        let (tasks, pool) = instance(70_000 + seed, m, n, r.random_range(m..=6 * m));
        let g = build_conflict_graph(&tasks, &pool);
        if !g.cross_component_contention(&tasks, &pool).is_empty() {
            contended += 1;
        }
        let budget = r.random_range(10.0..150.0);
        let (out, _) = msqm_group_parallel(&tasks, &pool, budget, 2, 4, 4).unwrap();
        if out.plan.recomputed_spent() > budget || !out.plan.has_unique_claims() {
            lane_bad += 1;
        }
        instances += 1;
    }
    let (tasks, pool) = figure_four();
    let g = build_conflict_graph(&tasks, &pool);
    let edges: Vec<(u32, u32)> = g.edges.iter().copied().collect();
    let fig_ok = edges == vec![(1, 3), (2, 3)] && g.components().len() == 1;
    verdict(
        contended == 0 && lane_bad == 0 && fig_ok,
        format!(
            "{instances} instances: {contended} with cross-group contention, {lane_bad} group plans \
             over budget or double-claimed; three-task example edges {edges:?}, bound ranks {:?}",
            g.bound_rank
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 10] = [
    (1, "approximation ratio", approximation_ratio),
    (2, "metric ground truth", metric_ground_truth),
    (3, "submodularity and monotonicity", submodularity),
    (4, "index exactness", index_exactness),
    (5, "cell lemma", cell_lemma),
    (6, "indexed speedup", speedup),
    (7, "parallel determinism", parallel_determinism),
    (8, "multi-task quality ordering", quality_ordering),
    (9, "max-min behaviour", mmqm_behaviour),
    (10, "conflict graph soundness", conflict_graph_soundness),
];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<&Criterion> = CRITERIA
        .iter()
        .filter(|(id, name, _)| {
            filters.is_empty()
                || filters
                    .iter()
                    .any(|f| name.contains(f.as_str()) || id.to_string() == **f)
        })
        .collect();
    // the timing criterion runs alone, the rest side by side
    let mut results: Vec<(u32, &str, Verdict, f64)> = Vec::new();
    let timed = |c: &Criterion| {
        let start = Instant::now();
        let v = (c.2)();
        (c.0, c.1, v, start.elapsed().as_secs_f64())
    };
    for c in selected.iter().filter(|c| c.0 == 6) {
        results.push(timed(c));
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = selected
            .iter()
            .filter(|c| c.0 != 6)
            .map(|c| s.spawn(move || timed(c)))
            .collect();
        for h in handles {
            results.push(h.join().expect("criterion panicked"));
        }
    });
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (id, name, v, secs) in &results {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id:>2}] {name} ({secs:.1}s): {}", v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    let unexpected: Vec<u32> = results
        .iter()
        .filter(|(id, _, v, _)| !v.pass && !KNOWN_RED.contains(id))
        .map(|r| r.0)
        .collect();
    for (id, _, v, _) in &results {
        if !v.pass && KNOWN_RED.contains(id) {
            println!(
                "criterion {id} stays red: the minimum of submodular functions is not submodular"
            );
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
