//! Benchmark runner: parameter sweeps over generated instances, one CSV per
//! experiment, a JSON run report, exported plans, and an audit that recomputes
//! every quality and spend figure from the exported plans.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{BenchConfig, Engine};
use super::gen::{gen_tasks, gen_workers, Distribution, GenSpec};
use super::io::{load_plan, save_plan};
use crate::model::{AssignmentPlan, PlanStep, SlotIndex, TaskInstance, WorkerPool};
use crate::multi_assign::{
    mmqm_assign, msqm_group_parallel, msqm_serial, msqm_task_parallel, random_multi_assign,
    Objective, ParallelMode,
};
use crate::quality::task_quality;
use crate::single_assign::{greedy_assign, greedy_assign_indexed, random_assign};
use crate::{Error, Result};

/// Active-slot run length of generated workers.
pub const WORKER_RUN: (usize, usize) = (1, 5);

/// Everything needed to regenerate one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub distribution: Distribution,
    pub domain_side: f64,
    pub m: usize,
    pub tasks: usize,
    pub workers: usize,
    pub seed: u64,
}

impl Scenario {
    /// Task locations follow the scenario's distribution; workers are uniform.
    pub fn build(&self) -> Result<(Vec<TaskInstance>, WorkerPool)> {
        let mut ws = GenSpec::new(Distribution::Uniform, self.workers, self.seed);
        ws.domain_side = self.domain_side;
        let mut ts = GenSpec::new(
            self.distribution,
            self.tasks,
            self.seed ^ 0x9e37_79b9_7f4a_7c15,
        );
        ts.domain_side = self.domain_side;
        Ok((
            gen_tasks(&ts, self.m)?,
            gen_workers(&ws, self.m, WORKER_RUN)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub figure: String,
    pub x: String,
    pub engine: Engine,
    pub seed: u64,
    pub scenario: Scenario,
    pub budget: f64,
    pub k: usize,
    pub t_s: usize,
    pub cores: usize,
    /// Sum of task qualities (the task's quality for single-task engines).
    pub quality: f64,
    pub q_min: f64,
    pub spent: f64,
    pub wall_ms: f64,
    pub pruning_ratio: Option<f64>,
    pub conflicts: usize,
    pub plan_file: Option<String>,
    pub error: Option<String>,
}

impl RunRecord {
    fn single_task(&self) -> bool {
        matches!(self.engine, Engine::Approx | Engine::ApproxStar)
            || (self.engine == Engine::Rand && self.scenario.tasks == 1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checked: usize,
    pub mismatches: Vec<String>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: BenchConfig,
    pub records: Vec<RunRecord>,
    /// CSV files written, relative to the output directory.
    pub csv_files: Vec<String>,
    /// True when at least one run failed.
    pub partial: bool,
    pub audit: Option<AuditReport>,
}

pub const CSV_HEADER: &str =
    "x,engine,runs,failed,mean_quality,std_quality,mean_q_min,mean_spent,mean_time_ms,mean_pruning_ratio,speedup_vs_serial";

struct Outcome {
    plan: AssignmentPlan,
    qualities: Vec<f64>,
    pruning: Option<f64>,
    conflicts: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_engine(
    engine: Engine,
    tasks: &[TaskInstance],
    pool: &WorkerPool,
    budget: f64,
    k: usize,
    t_s: usize,
    cores: usize,
    seed: u64,
) -> Result<Outcome> {
    let single = |plan: AssignmentPlan, pruning| Outcome {
        qualities: vec![plan.final_quality],
        plan,
        pruning,
        conflicts: 0,
    };
    let multi = |o: crate::multi_assign::MultiOutcome, pruning: bool| Outcome {
        pruning: pruning.then(|| o.stats.pruning_ratio()),
        conflicts: o.conflicts.len(),
        qualities: o.qualities,
        plan: o.plan,
    };
    let first = || tasks.first().ok_or(Error::EmptyTaskSet);
    Ok(match engine {
        Engine::Approx => single(greedy_assign(first()?, pool, budget, k)?.0, None),
        Engine::ApproxStar => {
            let (plan, trace) = greedy_assign_indexed(first()?, pool, budget, k, t_s)?;
            single(plan, Some(trace.stats.pruning_ratio()))
        }
        Engine::Rand if tasks.len() == 1 => {
            single(random_assign(&tasks[0], pool, budget, k, seed), None)
        }
        Engine::Rand => multi(random_multi_assign(tasks, pool, budget, k, seed), false),
        Engine::Serial => multi(msqm_serial(tasks, pool, budget, k, t_s)?, true),
        Engine::Group => multi(
            msqm_group_parallel(tasks, pool, budget, k, t_s, cores)?.0,
            true,
        ),
        Engine::Task => multi(
            msqm_task_parallel(
                tasks,
                pool,
                budget,
                k,
                t_s,
                cores,
                ParallelMode::Deterministic,
            )?,
            true,
        ),
        Engine::TaskOpportunistic => multi(
            msqm_task_parallel(
                tasks,
                pool,
                budget,
                k,
                t_s,
                cores,
                ParallelMode::Opportunistic,
            )?,
            true,
        ),
        Engine::Mmqm => multi(mmqm_assign(tasks, pool, budget, k, t_s)?, true),
    })
}

/// One sweep point of one figure.
struct Point<'a> {
    figure: &'a str,
    x: String,
    scenario: Scenario,
    budget: f64,
    cores: usize,
    engines: Vec<Engine>,
}

struct Runner<'a> {
    cfg: &'a BenchConfig,
    out: &'a Path,
    records: Vec<RunRecord>,
}

impl Runner<'_> {
    fn run_point(&mut self, p: &Point<'_>) -> Result<()> {
        let built = p.scenario.build();
        for &engine in &p.engines {
            let mut rec = RunRecord {
                figure: p.figure.to_string(),
                x: p.x.clone(),
                engine,
                seed: p.scenario.seed,
                scenario: p.scenario,
                budget: p.budget,
                k: self.cfg.k,
                t_s: self.cfg.t_s,
                cores: p.cores,
                quality: f64::NAN,
                q_min: f64::NAN,
                spent: f64::NAN,
                wall_ms: f64::NAN,
                pruning_ratio: None,
                conflicts: 0,
                plan_file: None,
                error: None,
            };
            let result = match &built {
                Ok((tasks, pool)) => {
                    let start = Instant::now();
                    let r = run_engine(
                        engine,
                        tasks,
                        pool,
                        p.budget,
                        self.cfg.k,
                        self.cfg.t_s,
                        p.cores,
                        p.scenario.seed,
                    );
                    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
                    r
                }
                Err(e) => Err(Error::Config(e.to_string())),
            };
            match result {
                Ok(o) => {
                    rec.quality = Objective::Sum.value(&o.qualities);
                    rec.q_min = Objective::Min.value(&o.qualities);
                    rec.spent = o.plan.spent;
                    rec.pruning_ratio = o.pruning;
                    rec.conflicts = o.conflicts;
                    if self.cfg.export_plans {
                        let name = format!(
                            "plans/{}-{}-{}-{}.csv",
                            p.figure, p.x, engine, p.scenario.seed
                        );
                        save_plan(&o.plan, &self.out.join(&name))?;
                        rec.plan_file = Some(name);
                    }
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            self.records.push(rec);
        }
        Ok(())
    }
}

fn pick(cfg: &BenchConfig, wanted: &[Engine]) -> Vec<Engine> {
    wanted.iter().copied().filter(|e| cfg.has(*e)).collect()
}

/// Runs every experiment of `cfg`, writing CSVs, plans and `report.json` under
/// `out`. Failed runs are recorded and the sweep continues.
pub fn run_bench(cfg: &BenchConfig, out: &Path) -> Result<RunReport> {
    cfg.check()?;
    fs::create_dir_all(out.join("plans"))?;
    let mut runner = Runner {
        cfg,
        out,
        records: Vec::new(),
    };
    let base = |seed_ix: usize| Scenario {
        distribution: cfg.distribution,
        domain_side: cfg.domain_side,
        m: cfg.m,
        tasks: cfg.tasks,
        workers: cfg.workers,
        seed: cfg.base_seed + seed_ix as u64,
    };
    let quality_engines = pick(cfg, &[Engine::Serial, Engine::Mmqm, Engine::Rand]);
    let single_engines = pick(cfg, &[Engine::Approx, Engine::ApproxStar, Engine::Rand]);
    let scaling_engines = pick(
        cfg,
        &[
            Engine::Serial,
            Engine::Group,
            Engine::Task,
            Engine::TaskOpportunistic,
        ],
    );
    let core_engines = pick(
        cfg,
        &[Engine::Group, Engine::Task, Engine::TaskOpportunistic],
    );
    for s in 0..cfg.seeds {
        for &b in &cfg.budgets {
            runner.run_point(&Point {
                figure: "quality_vs_budget",
                x: b.to_string(),
                scenario: base(s),
                budget: b,
                cores: cfg.cores,
                engines: quality_engines.clone(),
            })?;
        }
        for &d in &cfg.distributions {
            runner.run_point(&Point {
                figure: "quality_vs_distribution",
                x: d.to_string(),
                scenario: Scenario {
                    distribution: d,
                    ..base(s)
                },
                budget: cfg.budget,
                cores: cfg.cores,
                engines: quality_engines.clone(),
            })?;
        }
        for &m in &cfg.m_values {
            runner.run_point(&Point {
                figure: "time_vs_m",
                x: m.to_string(),
                scenario: Scenario {
                    m,
                    tasks: 1,
                    ..base(s)
                },
                budget: cfg.budget,
                cores: 1,
                engines: single_engines.clone(),
            })?;
        }
        for &n in &cfg.task_counts {
            runner.run_point(&Point {
                figure: "time_vs_tasks",
                x: n.to_string(),
                scenario: Scenario {
                    tasks: n,
                    ..base(s)
                },
                budget: cfg.budget,
                cores: cfg.cores,
                engines: scaling_engines.clone(),
            })?;
        }
        if cfg.has(Engine::Serial) && !core_engines.is_empty() {
            runner.run_point(&Point {
                figure: "time_vs_cores",
                x: "serial".into(),
                scenario: base(s),
                budget: cfg.budget,
                cores: 1,
                engines: vec![Engine::Serial],
            })?;
        }
        for &c in &cfg.core_counts {
            runner.run_point(&Point {
                figure: "time_vs_cores",
                x: c.to_string(),
                scenario: base(s),
                budget: cfg.budget,
                cores: c,
                engines: core_engines.clone(),
            })?;
        }
    }
    let records = runner.records;
    let csv_files = write_csvs(&records, out)?;
    let mut report = RunReport {
        config: cfg.clone(),
        partial: records.iter().any(|r| r.error.is_some()),
        records,
        csv_files,
        audit: None,
    };
    if cfg.export_plans {
        report.audit = Some(audit(&report, out)?);
    }
    fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn fmt_opt(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

type Rows<'a> = Vec<((String, Engine), Vec<&'a RunRecord>)>;

/// CSV text per figure, rows in first-appearance order of (x, engine).
pub fn csv_tables(records: &[RunRecord]) -> BTreeMap<String, String> {
    let mut groups: BTreeMap<String, Rows> = BTreeMap::new();
    for r in records {
        let rows = groups.entry(r.figure.clone()).or_default();
        let key = (r.x.clone(), r.engine);
        match rows.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => rows.push((key, vec![r])),
        }
    }
    let mut out = BTreeMap::new();
    for (figure, rows) in &groups {
        let ok_time = |rs: &[&RunRecord]| {
            mean(
                &rs.iter()
                    .filter(|r| r.error.is_none())
                    .map(|r| r.wall_ms)
                    .collect::<Vec<_>>(),
            )
        };
        let serial_time = |x: &str| {
            rows.iter()
                .find(|((rx, e), _)| *e == Engine::Serial && rx == x)
                .or_else(|| {
                    rows.iter()
                        .find(|((rx, e), _)| *e == Engine::Serial && rx == "serial")
                })
                .map(|(_, rs)| ok_time(rs))
        };
        let mut text = String::from(CSV_HEADER);
        text.push('\n');
        for ((x, engine), rs) in rows {
            let ok: Vec<&&RunRecord> = rs.iter().filter(|r| r.error.is_none()).collect();
            let q: Vec<f64> = ok.iter().map(|r| r.quality).collect();
            let qmin: Vec<f64> = ok.iter().map(|r| r.q_min).collect();
            let spent: Vec<f64> = ok.iter().map(|r| r.spent).collect();
            let prune: Vec<f64> = ok.iter().filter_map(|r| r.pruning_ratio).collect();
            let time = ok_time(rs);
            let speedup = match serial_time(x) {
                Some(st) if *engine != Engine::Serial => st / time,
                _ => f64::NAN,
            };
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{},{},{},{},{}",
                x,
                engine,
                rs.len(),
                rs.len() - ok.len(),
                fmt_opt(mean(&q)),
                fmt_opt(std_dev(&q)),
                fmt_opt(mean(&qmin)),
                fmt_opt(mean(&spent)),
                fmt_opt(time),
                fmt_opt(mean(&prune)),
                fmt_opt(speedup)
            );
        }
        out.insert(format!("{figure}.csv"), text);
    }
    if let Some(rows) = groups.get("time_vs_m") {
        let mut text = String::from("m,runs,mean_pruning_ratio,mean_evaluated_fraction\n");
        for ((x, engine), rs) in rows {
            if *engine != Engine::ApproxStar {
                continue;
            }
            let prune: Vec<f64> = rs.iter().filter_map(|r| r.pruning_ratio).collect();
            let p = mean(&prune);
            let _ = writeln!(
                text,
                "{},{},{},{}",
                x,
                prune.len(),
                fmt_opt(p),
                fmt_opt(1.0 - p)
            );
        }
        out.insert("pruning.csv".into(), text);
    }
    out
}

fn write_csvs(records: &[RunRecord], out: &Path) -> Result<Vec<String>> {
    let tables = csv_tables(records);
    for (name, text) in &tables {
        fs::write(out.join(name), text)?;
    }
    Ok(tables.into_keys().collect())
}

fn close(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

/// Checks one exported plan against its instance: costs match worker
/// distances, claims are unique, the budget holds, and the recorded quality
/// and spend equal the values recomputed by replaying the plan.
fn audit_record(rec: &RunRecord, steps: &[PlanStep]) -> Result<(Vec<String>, f64, f64, f64)> {
    let (mut tasks, pool) = rec.scenario.build()?;
    if rec.single_task() {
        tasks.truncate(1);
    }
    let mut problems = Vec::new();
    let label = format!("{}/{}/{}/{}", rec.figure, rec.x, rec.engine, rec.seed);
    let plan = AssignmentPlan {
        steps: steps.to_vec(),
        final_quality: 0.0,
        spent: 0.0,
    };
    if !plan.has_unique_claims() {
        problems.push(format!("{label}: a worker is used twice at one slot"));
    }
    for s in steps {
        let Some(task) = tasks.iter().find(|t| t.id == s.task) else {
            problems.push(format!("{label}: unknown task {}", s.task));
            continue;
        };
        match pool.workers_at(s.slot).iter().find(|w| w.id == s.worker) {
            Some(w) if task.loc.distance(&w.pos) == s.cost => {}
            Some(_) => problems.push(format!(
                "{label}: cost of worker {} is not its distance",
                s.worker
            )),
            None => problems.push(format!(
                "{label}: worker {} not available at slot {}",
                s.worker, s.slot.0
            )),
        }
        if s.slot.0 == 0 || s.slot > SlotIndex(task.m) {
            problems.push(format!("{label}: slot {} out of range", s.slot.0));
        }
    }
    let spent = plan.recomputed_spent();
    if spent > rec.budget {
        problems.push(format!(
            "{label}: spent {spent} exceeds budget {}",
            rec.budget
        ));
    }
    plan.apply(&mut tasks, &pool);
    let qs: Vec<f64> = tasks.iter().map(|t| task_quality(t, rec.k)).collect();
    let (q, qmin) = (Objective::Sum.value(&qs), Objective::Min.value(&qs));
    for (name, got, want) in [
        ("spent", spent, rec.spent),
        ("quality", q, rec.quality),
        ("q_min", qmin, rec.q_min),
    ] {
        if !close(got, want) {
            problems.push(format!("{label}: {name} recomputed {got}, recorded {want}"));
        }
    }
    Ok((problems, q, qmin, spent))
}

fn csv_equivalent(a: &str, b: &str) -> bool {
    let (la, lb): (Vec<&str>, Vec<&str>) = (a.lines().collect(), b.lines().collect());
    la.len() == lb.len()
        && la.iter().zip(&lb).all(|(x, y)| {
            let (fx, fy): (Vec<&str>, Vec<&str>) = (x.split(',').collect(), y.split(',').collect());
            fx.len() == fy.len()
                && fx
                    .iter()
                    .zip(&fy)
                    .all(|(p, q)| match (p.parse::<f64>(), q.parse::<f64>()) {
                        (Ok(u), Ok(v)) => close(u, v),
                        _ => p == q,
                    })
        })
}

/// Replays every exported plan, then rebuilds the CSVs from the recomputed
/// figures and compares them with the files in `out`.
pub fn audit(report: &RunReport, out: &Path) -> Result<AuditReport> {
    let mut result = AuditReport::default();
    let mut recomputed = report.records.clone();
    for rec in recomputed.iter_mut() {
        let Some(file) = &rec.plan_file else { continue };
        if rec.error.is_some() {
            continue;
        }
        let steps = load_plan(&out.join(file))?;
        let (problems, q, qmin, spent) = audit_record(rec, &steps)?;
        result.checked += 1;
        result.mismatches.extend(problems);
        rec.quality = q;
        rec.q_min = qmin;
        rec.spent = spent;
    }
    for (name, text) in csv_tables(&recomputed) {
        let path: PathBuf = out.join(&name);
        match fs::read_to_string(&path) {
            Ok(on_disk) if csv_equivalent(&on_disk, &text) => {}
            Ok(_) => result.mismatches.push(format!(
                "{name}: differs from figures recomputed from plans"
            )),
            Err(_) => result.mismatches.push(format!("{name}: missing")),
        }
    }
    Ok(result)
}

/// Reads `report.json` from `out` and audits it.
pub fn audit_dir(out: &Path) -> Result<AuditReport> {
    let report: RunReport = serde_json::from_str(&fs::read_to_string(out.join("report.json"))?)?;
    audit(&report, out)
}
