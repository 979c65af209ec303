//! The `tcsc` command line.
//!
//! Exit codes: 0 on success, 1 on invalid input or engine failure, 2 on
//! usage errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use super::bench::{audit_dir, run_bench};
use super::config::BenchConfig;
use super::gen::{gen_tasks, gen_workers, Distribution, GenSpec, DEFAULT_DOMAIN_SIDE};
use super::io::{load_plan, load_tasks, load_workers, plan_to_string, save_tasks, save_workers};
use crate::model::{validate_instance, AssignmentPlan, Budget, TaskInstance, WorkerPool};
use crate::multi_assign::{
    joint_brute_force, mmqm_assign, msqm_group_parallel, msqm_serial, msqm_task_parallel,
    random_multi_assign, MultiOutcome, Objective, ParallelMode, JOINT_CAP,
};
use crate::single_assign::{
    brute_force_optimal, greedy_assign, greedy_assign_indexed, random_assign, BRUTE_FORCE_CAP,
};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "tcsc",
    version,
    about = "Quality-aware task assignment for time-continuous spatial crowdsourcing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic workers or tasks file.
    Gen(GenArgs),
    /// Assign workers to one task.
    AssignSingle(SingleArgs),
    /// Assign workers to every task under one budget.
    AssignMulti(MultiArgs),
    /// Exhaustive optimum for small instances.
    Oracle(OracleArgs),
    /// Run a benchmark sweep from a config file.
    Bench(BenchArgs),
    /// Check an instance, and optionally a plan, for consistency.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Workers,
    Tasks,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Dist {
    Uniform,
    Gaussian,
    Zipfian,
}

impl From<Dist> for Distribution {
    fn from(d: Dist) -> Self {
        match d {
            Dist::Uniform => Distribution::Uniform,
            Dist::Gaussian => Distribution::Gaussian,
            Dist::Zipfian => Distribution::Zipfian,
        }
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "workers")]
    kind: Kind,
    #[arg(long, value_enum, default_value = "uniform")]
    dist: Dist,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of slots; workers are placed on runs of 1 to 5 slots.
    #[arg(long, default_value_t = 500)]
    m: usize,
    #[arg(long, default_value_t = DEFAULT_DOMAIN_SIDE)]
    domain: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Instance {
    #[arg(long)]
    workers: PathBuf,
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    budget: f64,
    #[arg(long, default_value_t = 3)]
    k: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SingleEngine {
    Approx,
    ApproxStar,
    Rand,
}

#[derive(Args, Debug)]
struct SingleArgs {
    #[command(flatten)]
    inst: Instance,
    #[arg(long, value_enum, default_value = "approx-star")]
    engine: SingleEngine,
    #[arg(long, default_value_t = 4)]
    ts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Task to assign; defaults to the first task in the file.
    #[arg(long)]
    task_id: Option<u32>,
    /// Plan file; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-iteration trace of the greedy engines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MultiEngine {
    Serial,
    Group,
    Task,
    Mmqm,
    Rand,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Deterministic,
    Opportunistic,
}

#[derive(Args, Debug)]
struct MultiArgs {
    #[command(flatten)]
    inst: Instance,
    #[arg(long, value_enum, default_value = "serial")]
    engine: MultiEngine,
    #[arg(long, value_enum, default_value = "deterministic")]
    mode: Mode,
    #[arg(long, default_value_t = 10)]
    cores: usize,
    #[arg(long, default_value_t = 4)]
    ts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Obj {
    Sum,
    Min,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    inst: Instance,
    /// Single-task search on this task.
    #[arg(long, conflicts_with = "objective")]
    task_id: Option<u32>,
    /// Joint search over all tasks; without it the first task is searched alone.
    #[arg(long, value_enum)]
    objective: Option<Obj>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Flat `key = value` file; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Only re-audit an existing output directory.
    #[arg(long)]
    audit_only: bool,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    workers: PathBuf,
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0.0)]
    budget: f64,
    #[arg(long)]
    plan: Option<PathBuf>,
}

/// Runs the command line on `argv` (program name first) and returns the exit
/// code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => gen(a),
        Command::AssignSingle(a) => assign_single(a),
        Command::AssignMulti(a) => assign_multi(a),
        Command::Oracle(a) => oracle(a),
        Command::Bench(a) => bench(a),
        Command::Validate(a) => validate(a),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let mut spec = GenSpec::new(a.dist.into(), a.n, a.seed);
    spec.domain_side = a.domain;
    match a.kind {
        Kind::Workers => save_workers(&gen_workers(&spec, a.m, super::bench::WORKER_RUN)?, &a.out),
        Kind::Tasks => save_tasks(&gen_tasks(&spec, a.m)?, &a.out),
    }
}

fn load(inst: &Instance) -> Result<(Vec<TaskInstance>, WorkerPool)> {
    let pool = load_workers(&inst.workers)?;
    let tasks = load_tasks(&inst.tasks, inst.m)?;
    validate_instance(&tasks, &pool, &Budget::new(inst.budget)).map_err(Error::Invalid)?;
    if inst.k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    Ok((tasks, pool))
}

fn pick_task(tasks: Vec<TaskInstance>, id: Option<u32>) -> Result<TaskInstance> {
    match id {
        Some(id) => tasks
            .into_iter()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::Config(format!("no task with id {id}"))),
        None => tasks.into_iter().next().ok_or(Error::EmptyTaskSet),
    }
}

fn emit_plan(plan: &AssignmentPlan, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => Ok(fs::write(path, plan_to_string(plan))?),
        None => {
            print!("{}", plan_to_string(plan));
            Ok(())
        }
    }
}

fn summary(line: String, to_stdout: bool) {
    if to_stdout {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn assign_single(a: SingleArgs) -> Result<()> {
    let (tasks, pool) = load(&a.inst)?;
    let task = pick_task(tasks, a.task_id)?;
    let (b, k) = (a.inst.budget, a.inst.k);
    let (plan, trace) = match a.engine {
        SingleEngine::Approx => {
            let (p, t) = greedy_assign(&task, &pool, b, k)?;
            (p, Some(t))
        }
        SingleEngine::ApproxStar => {
            let (p, t) = greedy_assign_indexed(&task, &pool, b, k, a.ts)?;
            (p, Some(t))
        }
        SingleEngine::Rand => (random_assign(&task, &pool, b, k, a.seed), None),
    };
    if let (Some(path), Some(t)) = (&a.trace, &trace) {
        fs::write(path, t.to_text())?;
    }
    emit_plan(&plan, a.out.as_deref())?;
    summary(
        format!(
            "task {}: quality {} spent {} steps {}",
            task.id,
            plan.final_quality,
            plan.spent,
            plan.steps.len()
        ),
        a.out.is_some(),
    );
    Ok(())
}

fn assign_multi(a: MultiArgs) -> Result<()> {
    let (tasks, pool) = load(&a.inst)?;
    let (b, k, ts) = (a.inst.budget, a.inst.k, a.ts);
    let mode = match a.mode {
        Mode::Deterministic => ParallelMode::Deterministic,
        Mode::Opportunistic => ParallelMode::Opportunistic,
    };
    let out: MultiOutcome = match a.engine {
        MultiEngine::Serial => msqm_serial(&tasks, &pool, b, k, ts)?,
        MultiEngine::Group => msqm_group_parallel(&tasks, &pool, b, k, ts, a.cores)?.0,
        MultiEngine::Task => msqm_task_parallel(&tasks, &pool, b, k, ts, a.cores, mode)?,
        MultiEngine::Mmqm => mmqm_assign(&tasks, &pool, b, k, ts)?,
        MultiEngine::Rand => random_multi_assign(&tasks, &pool, b, k, a.seed),
    };
    emit_plan(&out.plan, a.out.as_deref())?;
    summary(
        format!(
            "q_sum {} q_min {} spent {} steps {} conflicts {}",
            out.q_sum(),
            out.q_min(),
            out.plan.spent,
            out.plan.steps.len(),
            out.conflicts.len()
        ),
        a.out.is_some(),
    );
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<()> {
    let (tasks, pool) = load(&a.inst)?;
    let (b, k) = (a.inst.budget, a.inst.k);
    let (plan, value) = match a.objective {
        None => {
            let task = pick_task(tasks, a.task_id)?;
            brute_force_optimal(&task, &pool, b, k, BRUTE_FORCE_CAP)?
        }
        Some(o) => {
            let obj = match o {
                Obj::Sum => Objective::Sum,
                Obj::Min => Objective::Min,
            };
            joint_brute_force(&tasks, &pool, b, k, obj, JOINT_CAP)?
        }
    };
    emit_plan(&plan, a.out.as_deref())?;
    summary(
        format!("optimum {value} spent {}", plan.spent),
        a.out.is_some(),
    );
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    if a.audit_only {
        let audit = audit_dir(&a.out)?;
        for m in &audit.mismatches {
            eprintln!("{m}");
        }
        println!(
            "audited {} plans, {} mismatches",
            audit.checked,
            audit.mismatches.len()
        );
        return if audit.ok() {
            Ok(())
        } else {
            Err(Error::Config("audit failed".into()))
        };
    }
    let cfg = match &a.config {
        Some(path) => BenchConfig::parse(&fs::read_to_string(path)?)?,
        None => BenchConfig::default(),
    };
    let report = run_bench(&cfg, &a.out)?;
    let failed = report.records.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} runs ({} failed), csv: {}",
        report.records.len(),
        failed,
        report.csv_files.join(" ")
    );
    if let Some(audit) = &report.audit {
        for m in &audit.mismatches {
            eprintln!("{m}");
        }
        if !audit.ok() {
            return Err(Error::Config("audit failed".into()));
        }
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let pool = load_workers(&a.workers)?;
    let mut tasks = load_tasks(&a.tasks, a.m)?;
    let mut budget = Budget::new(a.budget);
    let plan = match &a.plan {
        Some(path) => {
            let steps = load_plan(path)?;
            let plan = AssignmentPlan {
                steps,
                final_quality: 0.0,
                spent: 0.0,
            };
            if !plan.has_unique_claims() {
                return Err(Error::Config("plan uses a worker twice at one slot".into()));
            }
            for s in &plan.steps {
                let ok = tasks.iter().any(|t| t.id == s.task)
                    && pool.workers_at(s.slot).iter().any(|w| w.id == s.worker);
                if !ok {
                    return Err(Error::Config(format!(
                        "plan step for task {} names worker {} not registered at slot {}",
                        s.task, s.worker, s.slot.0
                    )));
                }
            }
            plan.apply(&mut tasks, &pool);
            budget.spent = plan.recomputed_spent();
            Some(plan)
        }
        None => None,
    };
    validate_instance(&tasks, &pool, &budget).map_err(Error::Invalid)?;
    match plan {
        Some(p) => println!(
            "ok: {} tasks, {} worker slots, plan of {} steps",
            tasks.len(),
            pool.len(),
            p.steps.len()
        ),
        None => println!("ok: {} tasks, {} worker slots", tasks.len(), pool.len()),
    }
    Ok(())
}
