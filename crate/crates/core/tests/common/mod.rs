#![allow(dead_code)]

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcsc::harness::bench::Scenario;
use tcsc::harness::gen::Distribution;
use tcsc::single_assign::cheapest_candidates;
use tcsc::{Point, SlotIndex, TaskInstance, Worker, WorkerPool};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generated instance on the default 100-unit domain.
pub fn instance(
    seed: u64,
    m: usize,
    tasks: usize,
    workers: usize,
) -> (Vec<TaskInstance>, WorkerPool) {
    Scenario {
        distribution: Distribution::Uniform,
        domain_side: 100.0,
        m,
        tasks,
        workers,
        seed,
    }
    .build()
    .unwrap()
}

/// A task with the given slots executed at zero cost.
pub fn task_with(m: usize, executed: &[usize]) -> TaskInstance {
    let mut t = TaskInstance::new(0, Point::new(0.0, 0.0), m);
    for &s in executed {
        t.execute(SlotIndex(s), 0, 0.0, 1.0);
    }
    t
}

/// Random subset of `1..=m`, each slot kept with probability `p`.
pub fn random_slots(rng: &mut ChaCha8Rng, m: usize, p: f64) -> Vec<usize> {
    (1..=m).filter(|_| rng.random_bool(p)).collect()
}

/// Sum of the cheapest cost over every slot of every task.
pub fn full_cost(tasks: &[TaskInstance], pool: &WorkerPool) -> f64 {
    tasks
        .iter()
        .flat_map(|t| cheapest_candidates(t, pool))
        .flatten()
        .map(|c| c.cost)
        .sum()
}

pub struct Tiny {
    pub tasks: Vec<TaskInstance>,
    pub pool: WorkerPool,
    pub budget: f64,
    pub k: usize,
}

/// Small instance on a 10-unit domain: `n_tasks` tasks over `m` slots, with
/// 1 to 3 workers on each of at most `max_slots` random slots. The budget is a
/// random fraction of the cost of executing everything.
pub fn tiny(rng: &mut ChaCha8Rng, n_tasks: usize, m: usize, max_slots: usize) -> Tiny {
    let k = rng.random_range(1..=3);
    let n_slots = rng.random_range(1..=max_slots.min(m));
    let mut ws = Vec::new();
    let mut id = 0;
    for s in sample(rng, m, n_slots).into_iter().map(|s| s + 1) {
        for _ in 0..rng.random_range(1..=3) {
            let p = Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
            ws.push(Worker::new(id, s, p));
            id += 1;
        }
    }
    let pool = WorkerPool::from_workers(ws);
    let tasks: Vec<TaskInstance> = (0..n_tasks)
        .map(|i| {
            let p = Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
            TaskInstance::new(i as u32, p, m)
        })
        .collect();
    let budget = full_cost(&tasks, &pool) * rng.random_range(0.15..0.8);
    Tiny {
        tasks,
        pool,
        budget,
        k,
    }
}
