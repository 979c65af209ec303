//! Synthetic tasks and workers on a square domain.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal, Zipf};
use serde::{Deserialize, Serialize};

use crate::model::{Point, TaskInstance, Worker, WorkerPool};
use crate::{Error, Result};

pub const DEFAULT_DOMAIN_SIDE: f64 = 100.0;
/// Cells per side of the grid the Zipfian generator ranks.
const ZIPF_GRID: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Uniform,
    Gaussian,
    Zipfian,
}

impl Distribution {
    pub const ALL: [Distribution; 3] = [
        Distribution::Uniform,
        Distribution::Gaussian,
        Distribution::Zipfian,
    ];
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Uniform => "uniform",
            Distribution::Gaussian => "gaussian",
            Distribution::Zipfian => "zipfian",
        })
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Distribution::Uniform),
            "gaussian" | "normal" => Ok(Distribution::Gaussian),
            "zipfian" | "zipf" => Ok(Distribution::Zipfian),
            other => Err(Error::Config(format!("unknown distribution `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub distribution: Distribution,
    pub domain_side: f64,
    pub n_items: usize,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(distribution: Distribution, n_items: usize, seed: u64) -> Self {
        GenSpec {
            distribution,
            domain_side: DEFAULT_DOMAIN_SIDE,
            n_items,
            seed,
        }
    }
}

/// Draws points inside `[0, side]²`. Gaussian draws centre on the domain with
/// sigma `side / 6` and are redrawn when they fall outside. Zipfian draws pick
/// a grid cell by Zipf rank (exponent 1) over a random ranking of the cells,
/// then a uniform point in it.
fn sample_points(rng: &mut ChaCha8Rng, spec: &GenSpec) -> Result<Vec<Point>> {
    let side = spec.domain_side;
    if !(side > 0.0 && side.is_finite()) {
        return Err(Error::InvalidDomain(side));
    }
    let n = spec.n_items;
    let mut out = Vec::with_capacity(n);
    match spec.distribution {
        Distribution::Uniform => {
            for _ in 0..n {
                out.push(Point::new(
                    rng.random_range(0.0..=side),
                    rng.random_range(0.0..=side),
                ));
            }
        }
        Distribution::Gaussian => {
            let normal = Normal::new(side / 2.0, side / 6.0).expect("positive sigma");
            while out.len() < n {
                let (x, y) = (normal.sample(rng), normal.sample(rng));
                if (0.0..=side).contains(&x) && (0.0..=side).contains(&y) {
                    out.push(Point::new(x, y));
                }
            }
        }
        Distribution::Zipfian => {
            let cells = ZIPF_GRID * ZIPF_GRID;
            let mut order: Vec<usize> = (0..cells).collect();
            order.shuffle(rng);
            let zipf = Zipf::new(cells as f64, 1.0).expect("valid zipf");
            let w = side / ZIPF_GRID as f64;
            for _ in 0..n {
                let rank = zipf.sample(rng) as usize;
                let cell = order[rank.clamp(1, cells) - 1];
                let (cx, cy) = ((cell % ZIPF_GRID) as f64, (cell / ZIPF_GRID) as f64);
                out.push(Point::new(
                    cx * w + rng.random_range(0.0..w),
                    cy * w + rng.random_range(0.0..w),
                ));
            }
        }
    }
    Ok(out)
}

pub fn gen_points(spec: &GenSpec) -> Result<Vec<Point>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    sample_points(&mut rng, spec)
}

/// Tasks with ids `0..n`, all slots unexecuted.
pub fn gen_tasks(spec: &GenSpec, m: usize) -> Result<Vec<TaskInstance>> {
    Ok(gen_points(spec)?
        .into_iter()
        .enumerate()
        .map(|(i, p)| TaskInstance::new(i as u32, p, m))
        .collect())
}

/// Workers with ids `0..n`, each active on one contiguous run of slots whose
/// length is uniform in `run` (clipped to `m`).
pub fn gen_workers(spec: &GenSpec, m: usize, run: (usize, usize)) -> Result<WorkerPool> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let points = sample_points(&mut rng, spec)?;
    let mut pool = WorkerPool::new();
    if m == 0 {
        return Ok(pool);
    }
    let (lo, hi) = (run.0.max(1), run.1.max(run.0.max(1)));
    for (i, p) in points.into_iter().enumerate() {
        let len = rng.random_range(lo..=hi).min(m);
        let start = rng.random_range(1..=m - len + 1);
        for slot in start..start + len {
            pool.register(Worker::new(i as u32, slot, p));
        }
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_spec_gives_empty_pool() {
        let pool = gen_workers(&GenSpec::new(Distribution::Uniform, 0, 1), 10, (1, 5)).unwrap();
        assert!(pool.is_empty());
    }

    #[test]
    fn seeded_output_repeats() {
        for d in Distribution::ALL {
            let s = GenSpec::new(d, 200, 42);
            assert_eq!(gen_points(&s).unwrap(), gen_points(&s).unwrap());
        }
    }

    #[test]
    fn points_stay_in_domain() {
        for d in Distribution::ALL {
            for p in gen_points(&GenSpec::new(d, 2000, 3)).unwrap() {
                assert!((0.0..=100.0).contains(&p.x) && (0.0..=100.0).contains(&p.y));
            }
        }
    }

    #[test]
    fn runs_are_contiguous_and_bounded() {
        let pool = gen_workers(&GenSpec::new(Distribution::Uniform, 300, 5), 20, (1, 5)).unwrap();
        let mut slots: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
        for w in pool.iter() {
            slots.entry(w.id).or_default().push(w.slot.0);
        }
        assert_eq!(slots.len(), 300);
        for s in slots.values_mut() {
            s.sort_unstable();
            assert!((1..=5).contains(&s.len()));
            assert!(s.windows(2).all(|w| w[1] == w[0] + 1));
            assert!(s[0] >= 1 && *s.last().unwrap() <= 20);
        }
    }

    #[test]
    fn distribution_names_parse() {
        for d in Distribution::ALL {
            assert_eq!(d.to_string().parse::<Distribution>().unwrap(), d);
        }
        assert!("cauchy".parse::<Distribution>().is_err());
    }
}
