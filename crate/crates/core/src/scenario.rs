//! Experiment orchestration: the four comparison scenarios, the alpha/beta
//! sweep and percentage improvements between scenarios.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::battery::{BatteryParams, DispatchSchedule};
use crate::error::{Error, Result};
use crate::load_flow::{check_ampacity, check_voltage_band, SolverOptions};
use crate::network::{RadialNetwork, SectorMap};
use crate::objective::{
    evaluate_day_detailed, CostBreakdown, CostScale, DayInputs, ObjectiveWeights,
};
use crate::profiles::{HourlyProfileSet, LoadFlags, MixConfig, HOURS};
use crate::swarm::{optimize_schedule, SwarmConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    GridOnly,
    GridEv,
    GridEvNbbsr,
    Proposed,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 4] = [
        ScenarioName::GridOnly,
        ScenarioName::GridEv,
        ScenarioName::GridEvNbbsr,
        ScenarioName::Proposed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::GridOnly => "grid_only",
            ScenarioName::GridEv => "grid_ev",
            ScenarioName::GridEvNbbsr => "grid_ev_nbbsr",
            ScenarioName::Proposed => "proposed",
        }
    }

    pub fn flags(self) -> LoadFlags {
        match self {
            ScenarioName::GridOnly => LoadFlags::GRID_ONLY,
            ScenarioName::GridEv => LoadFlags {
                ev: true,
                solar: false,
            },
            ScenarioName::GridEvNbbsr | ScenarioName::Proposed => LoadFlags::ALL,
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    pub alpha: f64,
    pub beta: f64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!(
                "alpha and beta must lie in [0, 1] (got {}, {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Fixed inputs shared by every scenario of one run.
#[derive(Debug, Clone)]
pub struct Study {
    pub net: RadialNetwork,
    pub sectors: SectorMap,
    pub profiles: HourlyProfileSet,
    /// Battery template; `beta` is overridden per scenario.
    pub battery: BatteryParams,
    pub weights: ObjectiveWeights,
    pub solver: SolverOptions,
    pub swarm: SwarmConfig,
    pub trajectory_buses: Vec<u32>,
    pub voltage_band: f64,
    scale: CostScale,
}

impl Study {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        net: RadialNetwork,
        sectors: SectorMap,
        profiles: HourlyProfileSet,
        battery: BatteryParams,
        weights: ObjectiveWeights,
        solver: SolverOptions,
        swarm: SwarmConfig,
    ) -> Result<Self> {
        profiles.validate_for(&net)?;
        battery.validate()?;
        weights.validate()?;
        solver.validate()?;
        swarm.validate()?;
        // Calibration only reads grid-only load, so any mix will do.
        let mix = MixConfig::uniform(&net, 0.0)?;
        let scale = CostScale::calibrate(
            &DayInputs {
                net: &net,
                sectors: &sectors,
                profiles: &profiles,
                mix: &mix,
                battery: &battery,
                solver,
            },
            &weights,
        )?;
        Ok(Self {
            net,
            sectors,
            profiles,
            battery,
            weights,
            solver,
            swarm,
            trajectory_buses: vec![18, 33],
            voltage_band: 0.10,
            scale,
        })
    }

    pub fn scale(&self) -> &CostScale {
        &self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageTrajectory {
    pub bus_id: u32,
    /// Hourly magnitude (p.u.); `None` where the hour failed to solve.
    pub v_pu: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmSummary {
    pub seed: u64,
    pub best_cost: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub fell_back_to_zero: bool,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub spec: ScenarioSpec,
    pub breakdown: CostBreakdown,
    /// All hours solved, no battery overshoot, every bus inside the
    /// voltage band and every line inside its ampacity.
    pub feasible: bool,
    pub voltage_violations: usize,
    pub ampacity_violations: usize,
    pub min_v_pu: f64,
    pub max_v_pu: f64,
    pub trajectories: Vec<VoltageTrajectory>,
    pub schedule: Option<DispatchSchedule>,
    pub swarm: Option<SwarmSummary>,
    /// Every bus magnitude per hour, aligned with `net.buses`.
    #[serde(skip)]
    pub hourly_v_pu: Vec<Option<Vec<f64>>>,
}

pub fn run_scenario(study: &Study, spec: &ScenarioSpec) -> Result<ScenarioOutcome> {
    run_scenario_seeded(study, spec, study.swarm.seed)
}

/// As [`run_scenario`] with an explicit optimizer seed.
pub fn run_scenario_seeded(
    study: &Study,
    spec: &ScenarioSpec,
    seed: u64,
) -> Result<ScenarioOutcome> {
    spec.validate()?;
    let mix = MixConfig::uniform(&study.net, spec.alpha)?;
    let battery = BatteryParams {
        beta: spec.beta,
        ..study.battery.clone()
    };
    let inputs = DayInputs {
        net: &study.net,
        sectors: &study.sectors,
        profiles: &study.profiles,
        mix: &mix,
        battery: &battery,
        solver: study.solver,
    };

    let sector_count = study.sectors.sector_count() as usize;
    let (schedule, swarm) = if spec.name == ScenarioName::Proposed {
        let cfg = SwarmConfig {
            seed,
            ..study.swarm.clone()
        };
        let opt = optimize_schedule(&inputs, &study.weights, &study.scale, &cfg)?;
        let summary = SwarmSummary {
            seed,
            best_cost: opt.swarm.best_cost,
            evaluations: opt.swarm.evaluations,
            iterations: opt.swarm.iterations,
            fell_back_to_zero: opt.fell_back_to_zero,
            history: opt.swarm.history,
        };
        (opt.schedule, Some(summary))
    } else {
        (DispatchSchedule::zeros(sector_count), None)
    };

    let (breakdown, hours) = evaluate_day_detailed(
        &inputs,
        spec.name.flags(),
        &schedule,
        &study.weights,
        &study.scale,
    )?;

    let slack = study.net.slack_index();
    let mut voltage_violations = 0;
    let mut ampacity_violations = 0;
    let mut min_v = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    for sol in hours.iter().flatten() {
        voltage_violations += check_voltage_band(&study.net, sol, study.voltage_band).len();
        ampacity_violations += check_ampacity(&study.net, sol).len();
        for (i, &v) in sol.v_pu.iter().enumerate() {
            if i != slack {
                min_v = min_v.min(v);
                max_v = max_v.max(v);
            }
        }
    }
    let trajectories = study
        .trajectory_buses
        .iter()
        .filter_map(|&id| study.net.index_of(id).map(|i| (id, i)))
        .map(|(bus_id, i)| VoltageTrajectory {
            bus_id,
            v_pu: hours
                .iter()
                .map(|h| h.as_ref().map(|s| s.v_pu[i]))
                .collect(),
        })
        .collect();
    let feasible = breakdown.failed_hours == 0
        && breakdown.battery_overshoot_kwh == 0.0
        && voltage_violations == 0
        && ampacity_violations == 0;

    Ok(ScenarioOutcome {
        spec: *spec,
        breakdown,
        feasible,
        voltage_violations,
        ampacity_violations,
        min_v_pu: min_v,
        max_v_pu: max_v,
        trajectories,
        schedule: (spec.name == ScenarioName::Proposed).then_some(schedule),
        swarm,
        hourly_v_pu: hours.into_iter().map(|h| h.map(|s| s.v_pu)).collect(),
    })
}

/// Runs all four scenarios on the same inputs.
pub fn run_all_scenarios(study: &Study, alpha: f64, beta: f64) -> Result<Vec<ScenarioOutcome>> {
    ScenarioName::ALL
        .iter()
        .map(|&name| run_scenario(study, &ScenarioSpec { name, alpha, beta }))
        .collect()
}

/// Optimizer seed for one sweep cell, independent of evaluation order.
pub fn cell_seed(base_seed: u64, alpha: f64, beta: f64) -> u64 {
    crate::mix_seed(crate::mix_seed(base_seed, alpha.to_bits()), beta.to_bits())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub breakdown: Option<CostBreakdown>,
    pub feasible: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Row-major by alpha, then beta.
    pub cells: Vec<SweepCell>,
    /// `(alpha index, beta index)` of the cheapest successful cell.
    pub argmin: Option<(usize, usize)>,
}

impl SweepResult {
    pub fn cell(&self, i: usize, j: usize) -> &SweepCell {
        &self.cells[i * self.betas.len() + j]
    }

    pub fn cost(&self, i: usize, j: usize) -> Option<f64> {
        self.cell(i, j).breakdown.as_ref().map(|b| b.cost)
    }
}

pub fn sweep_alpha_beta(study: &Study, alphas: &[f64], betas: &[f64]) -> Result<SweepResult> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one alpha and one beta".into(),
        ));
    }
    if let Some(v) = alphas
        .iter()
        .chain(betas)
        .find(|v| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::Config(format!("sweep value {v} outside [0, 1]")));
    }
    let grid: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    let cells: Vec<SweepCell> = grid
        .par_iter()
        .map(|&(alpha, beta)| {
            let seed = cell_seed(study.swarm.seed, alpha, beta);
            let spec = ScenarioSpec {
                name: ScenarioName::Proposed,
                alpha,
                beta,
            };
            match run_scenario_seeded(study, &spec, seed) {
                Ok(out) => SweepCell {
                    alpha,
                    beta,
                    seed,
                    breakdown: Some(out.breakdown),
                    feasible: out.feasible,
                    error: None,
                },
                Err(e) => SweepCell {
                    alpha,
                    beta,
                    seed,
                    breakdown: None,
                    feasible: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut argmin: Option<(usize, usize, f64)> = None;
    for (k, cell) in cells.iter().enumerate() {
        if let Some(b) = &cell.breakdown {
            if argmin.is_none_or(|(_, _, c)| b.cost < c) {
                argmin = Some((k / betas.len(), k % betas.len(), b.cost));
            }
        }
    }
    Ok(SweepResult {
        alphas: alphas.to_vec(),
        betas: betas.to_vec(),
        cells,
        argmin: argmin.map(|(i, j, _)| (i, j)),
    })
}

/// Percentage reductions `(baseline - proposed) / baseline * 100`; `None`
/// where the baseline is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub baseline: String,
    pub loss_pct: Option<f64>,
    pub avg_v_dev_pct: Option<f64>,
    pub cost_pct: Option<f64>,
}

pub fn reduction_pct(baseline: f64, proposed: f64) -> Option<f64> {
    (baseline != 0.0).then(|| (baseline - proposed) / baseline * 100.0)
}

pub fn improvement_report(
    baselines: &[(String, CostBreakdown)],
    proposed: &CostBreakdown,
) -> Vec<Improvement> {
    baselines
        .iter()
        .map(|(name, b)| Improvement {
            baseline: name.clone(),
            loss_pct: reduction_pct(b.p_loss_total_kw, proposed.p_loss_total_kw),
            avg_v_dev_pct: reduction_pct(b.avg_v_dev_pct, proposed.avg_v_dev_pct),
            cost_pct: reduction_pct(b.cost, proposed.cost),
        })
        .collect()
}

/// Hourly voltages of every bus in one outcome, flattened for checks.
pub fn all_voltages(outcome: &ScenarioOutcome, net: &RadialNetwork) -> Vec<(u32, usize, f64)> {
    let slack = net.slack_index();
    let mut out = Vec::with_capacity(HOURS * net.bus_count());
    for (h, hour) in outcome.hourly_v_pu.iter().enumerate() {
        if let Some(v) = hour {
            for (i, &x) in v.iter().enumerate() {
                if i != slack {
                    out.push((net.buses[i].id, h, x));
                }
            }
        }
    }
    out
}
