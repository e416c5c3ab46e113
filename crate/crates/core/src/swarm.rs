//! Global-best particle swarm optimization over a bounded box, and its use
//! to search sector-by-hour battery schedules.
//!
//! Randomness is drawn from a single seeded stream in a fixed order, while
//! fitness evaluations fan out over the rayon pool. Results therefore depend
//! only on the seed, not on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::battery::{sector_power_caps, DispatchSchedule};
use crate::error::{Error, Result};
use crate::objective::{evaluate_day, CostBreakdown, CostScale, DayInputs, ObjectiveWeights};
use crate::profiles::{LoadFlags, HOURS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia_w: f64,
    pub c1: f64,
    pub c2: f64,
    /// Velocity clamp as a fraction of each dimension's range.
    pub v_max_frac: f64,
    pub seed: u64,
    /// Stop after this many iterations without improvement (0 disables).
    pub stall_iters: usize,
    /// Print `iter,best_cost,evals` to stderr after every iteration.
    pub progress: bool,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            particles: 50,
            iterations: 300,
            inertia_w: 0.72,
            c1: 1.49,
            c2: 1.49,
            v_max_frac: 0.5,
            seed: 42,
            stall_iters: 50,
            progress: false,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::Config("swarm needs at least 2 particles".into()));
        }
        if !(0.0..=1.0).contains(&self.inertia_w) {
            return Err(Error::Config("inertia_w must lie in [0, 1]".into()));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0 && self.c1.is_finite() && self.c2.is_finite()) {
            return Err(Error::Config("c1 and c2 must be >= 0".into()));
        }
        if !(self.v_max_frac > 0.0 && self.v_max_frac <= 1.0) {
            return Err(Error::Config("v_max_frac must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Config(
                "bounds must be non-empty and of equal length".into(),
            ));
        }
        if let Some(d) = (0..lower.len())
            .find(|&d| lower[d].partial_cmp(&upper[d]) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::Config(format!(
                "dimension {d}: lower bound {} is not below upper bound {}",
                lower[d], upper[d]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }
}

/// A cost function over a fixed-dimension vector. It must be total over the
/// search box; infeasibility belongs in the returned cost.
pub trait Fitness: Sync {
    fn dimension(&self) -> usize;
    fn cost(&self, x: &[f64]) -> f64;
}

/// Adapts a closure to [`Fitness`].
pub struct FnFitness<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnFitness<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Fitness for FnFitness<F> {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn cost(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmResult {
    pub best_position: Vec<f64>,
    pub best_cost: f64,
    /// Global best after initialization, then after every iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub iterations: usize,
}

pub fn optimize<F: Fitness + ?Sized>(
    f: &F,
    space: &SearchSpace,
    cfg: &SwarmConfig,
) -> Result<SwarmResult> {
    optimize_seeded(f, space, cfg, &[])
}

/// Like [`optimize`], with the first particles placed at `seeds` (clipped to
/// the box) instead of at random.
pub fn optimize_seeded<F: Fitness + ?Sized>(
    f: &F,
    space: &SearchSpace,
    cfg: &SwarmConfig,
    seeds: &[Vec<f64>],
) -> Result<SwarmResult> {
    cfg.validate()?;
    let dim = space.dim();
    if f.dimension() != dim {
        return Err(Error::Config(format!(
            "fitness expects {} dimensions, search space has {dim}",
            f.dimension()
        )));
    }
    if let Some(s) = seeds.iter().find(|s| s.len() != dim) {
        return Err(Error::Config(format!(
            "seed position has {} values, expected {dim}",
            s.len()
        )));
    }

    let n = cfg.particles;
    let v_max: Vec<f64> = (0..dim)
        .map(|d| cfg.v_max_frac * (space.upper[d] - space.lower[d]))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut pos: Vec<Vec<f64>> = (0..n)
        .map(|p| match seeds.get(p) {
            Some(s) => (0..dim)
                .map(|d| s[d].clamp(space.lower[d], space.upper[d]))
                .collect(),
            None => (0..dim)
                .map(|d| rng.gen_range(space.lower[d]..=space.upper[d]))
                .collect(),
        })
        .collect();
    let mut vel: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..dim)
                .map(|d| rng.gen_range(-v_max[d]..=v_max[d]))
                .collect()
        })
        .collect();

    let eval = |xs: &[Vec<f64>]| -> Vec<f64> {
        xs.par_iter()
            .map(|x| {
                let c = f.cost(x);
                if c.is_nan() {
                    f64::INFINITY
                } else {
                    c
                }
            })
            .collect()
    };

    let mut cost = eval(&pos);
    let mut evaluations = n;
    let mut pbest = pos.clone();
    let mut pbest_cost = cost.clone();
    let mut g = argmin(&pbest_cost);
    let mut gbest = pbest[g].clone();
    let mut gbest_cost = pbest_cost[g];
    let mut history = vec![gbest_cost];
    let mut stall = 0;
    let mut iterations = 0;

    while iterations < cfg.iterations {
        iterations += 1;
        for p in 0..n {
            for d in 0..dim {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let x = pos[p][d];
                let mut v = cfg.inertia_w * vel[p][d]
                    + cfg.c1 * r1 * (pbest[p][d] - x)
                    + cfg.c2 * r2 * (gbest[d] - x);
                v = v.clamp(-v_max[d], v_max[d]);
                let mut nx = x + v;
                if nx < space.lower[d] {
                    nx = space.lower[d];
                    v = 0.0;
                } else if nx > space.upper[d] {
                    nx = space.upper[d];
                    v = 0.0;
                }
                pos[p][d] = nx;
                vel[p][d] = v;
            }
        }

        cost = eval(&pos);
        evaluations += n;
        for p in 0..n {
            if cost[p] < pbest_cost[p] {
                pbest_cost[p] = cost[p];
                pbest[p].clone_from(&pos[p]);
            }
        }
        g = argmin(&pbest_cost);
        if pbest_cost[g] < gbest_cost {
            gbest_cost = pbest_cost[g];
            gbest.clone_from(&pbest[g]);
            stall = 0;
        } else {
            stall += 1;
        }
        history.push(gbest_cost);
        if cfg.progress {
            eprintln!("{iterations},{gbest_cost:.8},{evaluations}");
        }
        if cfg.stall_iters > 0 && stall >= cfg.stall_iters {
            break;
        }
    }

    Ok(SwarmResult {
        best_position: gbest,
        best_cost: gbest_cost,
        history,
        evaluations,
        iterations,
    })
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOptimum {
    pub schedule: DispatchSchedule,
    pub breakdown: CostBreakdown,
    pub swarm: SwarmResult,
    /// True when the zero schedule was returned because nothing beat it.
    pub fell_back_to_zero: bool,
}

/// Searches the sector-by-hour schedule that minimizes the daily cost with
/// all load components present. Sectors whose power cap is zero are held at
/// zero. The result never costs more than the zero schedule.
pub fn optimize_schedule(
    inputs: &DayInputs<'_>,
    weights: &ObjectiveWeights,
    scale: &CostScale,
    cfg: &SwarmConfig,
) -> Result<ScheduleOptimum> {
    inputs.battery.validate()?;
    let sectors = inputs.sectors.sector_count() as usize;
    let flags = LoadFlags::ALL;
    let zero = DispatchSchedule::zeros(sectors);
    let zero_cost = evaluate_day(inputs, flags, &zero, weights, scale)?;

    let caps = sector_power_caps(inputs.net, inputs.sectors, inputs.mix, inputs.battery);
    let active: Vec<usize> = (0..sectors).filter(|&s| caps[s] > 0.0).collect();
    if active.is_empty() {
        return Ok(ScheduleOptimum {
            schedule: zero,
            swarm: SwarmResult {
                best_position: Vec::new(),
                best_cost: zero_cost.cost,
                history: vec![zero_cost.cost],
                evaluations: 1,
                iterations: 0,
            },
            breakdown: zero_cost,
            fell_back_to_zero: true,
        });
    }

    let dim = active.len() * HOURS;
    let mut lower = Vec::with_capacity(dim);
    let mut upper = Vec::with_capacity(dim);
    for &s in &active {
        lower.extend(std::iter::repeat_n(-caps[s], HOURS));
        upper.extend(std::iter::repeat_n(caps[s], HOURS));
    }
    let space = SearchSpace::new(lower, upper)?;

    let expand = |x: &[f64]| -> DispatchSchedule {
        let mut sched = DispatchSchedule::zeros(sectors);
        for (k, &s) in active.iter().enumerate() {
            sched.p_bt[s].copy_from_slice(&x[k * HOURS..(k + 1) * HOURS]);
        }
        sched
    };
    let fitness = FnFitness::new(dim, |x: &[f64]| {
        evaluate_day(inputs, flags, &expand(x), weights, scale).map_or(f64::INFINITY, |b| b.cost)
    });
    let swarm = optimize_seeded(&fitness, &space, cfg, &[vec![0.0; dim]])?;

    let best = expand(&swarm.best_position);
    let breakdown = evaluate_day(inputs, flags, &best, weights, scale)?;
    if breakdown.cost <= zero_cost.cost {
        Ok(ScheduleOptimum {
            schedule: best,
            breakdown,
            swarm,
            fell_back_to_zero: false,
        })
    } else {
        Ok(ScheduleOptimum {
            schedule: zero,
            breakdown: zero_cost,
            swarm,
            fell_back_to_zero: true,
        })
    }
}
