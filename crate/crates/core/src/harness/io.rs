//! Line-oriented text formats.
//!
//! * workers: `worker_id,slot,x,y[,reliability]`
//! * tasks: `task_id,x,y`
//! * plans: `task_id,slot,worker_id,cost`, in commit order
//!
//! Blank lines and lines starting with `#` are skipped. Floats are written in
//! shortest round-trip form, so save followed by load is lossless.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::model::{AssignmentPlan, PlanStep, Point, SlotIndex, TaskInstance, Worker, WorkerPool};
use crate::{Error, Result};

fn records<'a>(text: &'a str) -> impl Iterator<Item = (usize, Vec<&'a str>)> + 'a {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split(',').map(str::trim).collect()))
        }
    })
}

struct Ctx<'a> {
    path: &'a str,
    line: usize,
}

impl Ctx<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn field<T: FromStr>(&self, value: &str, name: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| self.err(format!("field `{name}`: cannot parse `{value}`")))
    }

    fn finite(&self, value: &str, name: &str) -> Result<f64> {
        let v: f64 = self.field(value, name)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(format!("field `{name}` must be finite")))
        }
    }

    fn count(&self, fields: &[&str], allowed: &[usize], format: &str) -> Result<()> {
        if allowed.contains(&fields.len()) {
            Ok(())
        } else {
            Err(self.err(format!(
                "expected `{format}`, found {} fields",
                fields.len()
            )))
        }
    }
}

pub fn parse_workers(text: &str, path: &str) -> Result<WorkerPool> {
    let mut pool = WorkerPool::new();
    let mut seen = HashSet::new();
    for (line, f) in records(text) {
        let cx = Ctx { path, line };
        cx.count(&f, &[4, 5], "worker_id,slot,x,y[,reliability]")?;
        let id: u32 = cx.field(f[0], "worker_id")?;
        let slot: usize = cx.field(f[1], "slot")?;
        if slot == 0 {
            return Err(cx.err("slots are numbered from 1"));
        }
        let pos = Point::new(cx.finite(f[2], "x")?, cx.finite(f[3], "y")?);
        let reliability = match f.get(4) {
            Some(v) => cx.finite(v, "reliability")?,
            None => 1.0,
        };
        if !(0.0..=1.0).contains(&reliability) {
            return Err(cx.err("reliability outside [0, 1]"));
        }
        if !seen.insert((id, slot)) {
            return Err(cx.err(format!("worker {id} registered twice at slot {slot}")));
        }
        pool.register(Worker {
            id,
            slot: SlotIndex(slot),
            pos,
            reliability,
        });
    }
    Ok(pool)
}

pub fn parse_tasks(text: &str, path: &str, m: usize) -> Result<Vec<TaskInstance>> {
    let mut tasks = Vec::new();
    let mut seen = HashSet::new();
    for (line, f) in records(text) {
        let cx = Ctx { path, line };
        cx.count(&f, &[3], "task_id,x,y")?;
        let id: u32 = cx.field(f[0], "task_id")?;
        if !seen.insert(id) {
            return Err(cx.err(format!("task {id} defined twice")));
        }
        let loc = Point::new(cx.finite(f[1], "x")?, cx.finite(f[2], "y")?);
        tasks.push(TaskInstance::new(id, loc, m));
    }
    Ok(tasks)
}

pub fn parse_plan(text: &str, path: &str) -> Result<Vec<PlanStep>> {
    records(text)
        .map(|(line, f)| {
            let cx = Ctx { path, line };
            cx.count(&f, &[4], "task_id,slot,worker_id,cost")?;
            Ok(PlanStep {
                task: cx.field(f[0], "task_id")?,
                slot: SlotIndex(cx.field(f[1], "slot")?),
                worker: cx.field(f[2], "worker_id")?,
                cost: cx.finite(f[3], "cost")?,
            })
        })
        .collect()
}

pub fn workers_to_string(pool: &WorkerPool) -> String {
    let mut out = String::from("# worker_id,slot,x,y[,reliability]\n");
    let mut all: Vec<&Worker> = pool.iter().collect();
    all.sort_by_key(|w| (w.id, w.slot));
    for w in all {
        let _ = write!(out, "{},{},{},{}", w.id, w.slot.0, w.pos.x, w.pos.y);
        if w.reliability != 1.0 {
            let _ = write!(out, ",{}", w.reliability);
        }
        out.push('\n');
    }
    out
}

pub fn tasks_to_string(tasks: &[TaskInstance]) -> String {
    let mut out = String::from("# task_id,x,y\n");
    for t in tasks {
        let _ = writeln!(out, "{},{},{}", t.id, t.loc.x, t.loc.y);
    }
    out
}

pub fn plan_to_string(plan: &AssignmentPlan) -> String {
    let mut out = String::from("# task_id,slot,worker_id,cost\n");
    for s in &plan.steps {
        let _ = writeln!(out, "{},{},{},{}", s.task, s.slot.0, s.worker, s.cost);
    }
    out
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

pub fn load_workers(path: &Path) -> Result<WorkerPool> {
    parse_workers(&read(path)?, &path.display().to_string())
}

pub fn load_tasks(path: &Path, m: usize) -> Result<Vec<TaskInstance>> {
    parse_tasks(&read(path)?, &path.display().to_string(), m)
}

pub fn load_plan(path: &Path) -> Result<Vec<PlanStep>> {
    parse_plan(&read(path)?, &path.display().to_string())
}

pub fn save_workers(pool: &WorkerPool, path: &Path) -> Result<()> {
    Ok(fs::write(path, workers_to_string(pool))?)
}

pub fn save_tasks(tasks: &[TaskInstance], path: &Path) -> Result<()> {
    Ok(fs::write(path, tasks_to_string(tasks))?)
}

pub fn save_plan(plan: &AssignmentPlan, path: &Path) -> Result<()> {
    Ok(fs::write(path, plan_to_string(plan))?)
}
