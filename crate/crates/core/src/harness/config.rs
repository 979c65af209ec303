//! Benchmark configuration as flat `key = value` text.
//!
//! List values are comma separated. Unknown keys are errors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::gen::{Distribution, DEFAULT_DOMAIN_SIDE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Single-task greedy, direct evaluation.
    Approx,
    /// Single-task greedy over the index.
    ApproxStar,
    /// Random baseline (single- or multi-task).
    Rand,
    Serial,
    Group,
    Task,
    TaskOpportunistic,
    Mmqm,
}

impl Engine {
    pub const ALL: [Engine; 8] = [
        Engine::Approx,
        Engine::ApproxStar,
        Engine::Rand,
        Engine::Serial,
        Engine::Group,
        Engine::Task,
        Engine::TaskOpportunistic,
        Engine::Mmqm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Approx => "approx",
            Engine::ApproxStar => "approx-star",
            Engine::Rand => "rand",
            Engine::Serial => "serial",
            Engine::Group => "group",
            Engine::Task => "task",
            Engine::TaskOpportunistic => "task-opportunistic",
            Engine::Mmqm => "mmqm",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        Engine::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown engine `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub m: usize,
    pub tasks: usize,
    pub workers: usize,
    pub budget: f64,
    pub k: usize,
    pub t_s: usize,
    pub cores: usize,
    pub distribution: Distribution,
    pub domain_side: f64,
    pub seeds: usize,
    pub base_seed: u64,
    pub engines: Vec<Engine>,
    /// Sweep values, one per figure-analog.
    pub budgets: Vec<f64>,
    pub distributions: Vec<Distribution>,
    pub m_values: Vec<usize>,
    pub task_counts: Vec<usize>,
    pub core_counts: Vec<usize>,
    /// Write plan files and audit them after the run.
    pub export_plans: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            m: 500,
            tasks: 300,
            workers: 10_000,
            budget: 100.0,
            k: 3,
            t_s: 4,
            cores: 10,
            distribution: Distribution::Uniform,
            domain_side: DEFAULT_DOMAIN_SIDE,
            seeds: 5,
            base_seed: 1,
            engines: Engine::ALL.to_vec(),
            budgets: vec![50.0, 100.0, 200.0],
            distributions: Distribution::ALL.to_vec(),
            m_values: vec![300, 500, 1000],
            task_counts: vec![100, 200, 300],
            core_counts: vec![1, 2, 4, 8, 10],
            export_plans: true,
        }
    }
}

fn list<T: FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse `{s}`")))
        })
        .collect()
}

fn one<T: FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

impl BenchConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "m" => self.m = one(value, key)?,
            "tasks" => self.tasks = one(value, key)?,
            "workers" => self.workers = one(value, key)?,
            "budget" => self.budget = one(value, key)?,
            "k" => self.k = one(value, key)?,
            "t_s" | "ts" => self.t_s = one(value, key)?,
            "cores" => self.cores = one(value, key)?,
            "distribution" => self.distribution = value.parse()?,
            "domain_side" => self.domain_side = one(value, key)?,
            "seeds" => self.seeds = one(value, key)?,
            "base_seed" | "seed" => self.base_seed = one(value, key)?,
            "engines" => {
                self.engines = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "budgets" => self.budgets = list(value, key)?,
            "distributions" => {
                self.distributions = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "m_values" => self.m_values = list(value, key)?,
            "task_counts" => self.task_counts = list(value, key)?,
            "core_counts" => self.core_counts = list(value, key)?,
            "export_plans" => self.export_plans = one(value, key)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = BenchConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if self.m < crate::model::MIN_SLOTS
            || self.m_values.iter().any(|&m| m < crate::model::MIN_SLOTS)
        {
            return Err(Error::Config(format!(
                "m must be at least {}",
                crate::model::MIN_SLOTS
            )));
        }
        if self.k == 0 || self.t_s == 0 || self.cores == 0 || self.seeds == 0 {
            return Err(Error::Config(
                "k, t_s, cores and seeds must be positive".into(),
            ));
        }
        let bad = |b: f64| b.is_nan() || b < 0.0;
        if bad(self.budget) || self.budgets.iter().any(|&b| bad(b)) {
            return Err(Error::Config("budgets must be non-negative".into()));
        }
        if self.domain_side.is_nan() || self.domain_side <= 0.0 {
            return Err(Error::InvalidDomain(self.domain_side));
        }
        Ok(())
    }

    pub fn has(&self, engine: Engine) -> bool {
        self.engines.contains(&engine)
    }
}
