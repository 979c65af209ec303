//! Browser bindings for the interactive demo in `www/`.
//!
//! Every export takes plain numbers and strings and returns JSON or text, so
//! the page needs no generated type glue beyond the wasm-bindgen shim.

use serde::Serialize;
use tcsc::harness::bench::Scenario;
use tcsc::harness::gen::Distribution;
use tcsc::knn_index::VoronoiTree;
use tcsc::quality::{slot_probabilities, task_quality};
use tcsc::single_assign::greedy_assign_indexed;
use tcsc::{Point, SlotIndex, TaskInstance};
use wasm_bindgen::prelude::*;

fn parse_slots(text: &str, m: usize) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in text.split(|c: char| c == ',' || c.is_whitespace()) {
        if part.is_empty() {
            continue;
        }
        let s: usize = part
            .parse()
            .map_err(|_| format!("`{part}` is not a slot number"))?;
        if s == 0 || s > m {
            return Err(format!("slot {s} outside 1..={m}"));
        }
        out.push(s);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn check(m: usize, k: usize) -> Result<(), String> {
    if !(tcsc::model::MIN_SLOTS..=5000).contains(&m) {
        return Err(format!("m must be in {}..=5000", tcsc::model::MIN_SLOTS));
    }
    if k == 0 {
        return Err("k must be positive".into());
    }
    Ok(())
}

#[derive(Serialize)]
struct Profile {
    probabilities: Vec<f64>,
    quality: f64,
    max_quality: f64,
}

/// Finishing probability of every slot and the task quality for the given
/// executed slots.
pub fn profile_json(m: usize, k: usize, executed: &str) -> Result<String, String> {
    check(m, k)?;
    let mut t = TaskInstance::new(0, Point::new(0.0, 0.0), m);
    for s in parse_slots(executed, m)? {
        t.execute(SlotIndex(s), 0, 0.0, 1.0);
    }
    let p = Profile {
        probabilities: slot_probabilities(&t, k),
        quality: task_quality(&t, k),
        max_quality: (m as f64).log2(),
    };
    serde_json::to_string(&p).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Step {
    slot: usize,
    worker: u32,
    cost: f64,
    heuristic: f64,
    quality: f64,
}

#[derive(Serialize)]
struct GreedyRun {
    task: Point,
    workers: Vec<(usize, u32, Point)>,
    steps: Vec<Step>,
    single_commit: bool,
    quality: f64,
    spent: f64,
    pruning_ratio: f64,
    probabilities: Vec<f64>,
}

/// Generates a one-task instance and runs the indexed greedy on it.
pub fn greedy_json(
    m: usize,
    workers: usize,
    budget: f64,
    k: usize,
    t_s: usize,
    seed: u64,
) -> Result<String, String> {
    check(m, k)?;
    if t_s == 0 || workers > 50_000 || budget.is_nan() || budget < 0.0 {
        return Err("need t_s > 0, at most 50000 workers and a non-negative budget".into());
    }
    let (tasks, pool) = Scenario {
        distribution: Distribution::Uniform,
        domain_side: 100.0,
        m,
        tasks: 1,
        workers,
        seed,
    }
    .build()
    .map_err(|e| e.to_string())?;
    let task = &tasks[0];
    let (plan, trace) =
        greedy_assign_indexed(task, &pool, budget, k, t_s).map_err(|e| e.to_string())?;
    let mut done = task.clone();
    plan.apply(std::slice::from_mut(&mut done), &pool);
    let run = GreedyRun {
        task: task.loc,
        workers: pool.iter().map(|w| (w.slot.0, w.id, w.pos)).collect(),
        steps: trace
            .iterations
            .iter()
            .map(|s| Step {
                slot: s.slot.0,
                worker: s.worker,
                cost: s.cost,
                heuristic: s.heuristic,
                quality: s.quality,
            })
            .collect(),
        single_commit: trace.used_t_prime,
        quality: plan.final_quality,
        spent: plan.spent,
        pruning_ratio: trace.stats.pruning_ratio(),
        probabilities: slot_probabilities(&done, k),
    };
    serde_json::to_string(&run).map_err(|e| e.to_string())
}

/// Text rendering of the kNN index for the given executed slots.
pub fn index_text(m: usize, k: usize, t_s: usize, executed: &str) -> Result<String, String> {
    check(m, k)?;
    if m > 400 || t_s == 0 {
        return Err("the index view takes m up to 400 and t_s > 0".into());
    }
    let ex = parse_slots(executed, m)?;
    Ok(VoronoiTree::build(m, k, t_s, &ex).dump())
}

#[wasm_bindgen]
pub fn probability_profile(m: usize, k: usize, executed: &str) -> Result<String, JsValue> {
    profile_json(m, k, executed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn run_greedy(
    m: usize,
    workers: usize,
    budget: f64,
    k: usize,
    t_s: usize,
    seed: u32,
) -> Result<String, JsValue> {
    greedy_json(m, workers, budget, k, t_s, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn index_dump(m: usize, k: usize, t_s: usize, executed: &str) -> Result<String, JsValue> {
    index_text(m, k, t_s, executed).map_err(|e| JsValue::from_str(&e))
}
