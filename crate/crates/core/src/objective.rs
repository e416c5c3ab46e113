//! Daily cost of a dispatch schedule: weighted active loss plus voltage
//! deviation, summed over 24 hourly load-flow snapshots, plus penalties for
//! battery bound violations and hours the load flow could not solve.

use serde::{Deserialize, Serialize};

use crate::battery::{schedule_penalty, BatteryParams, DispatchSchedule};
use crate::error::{Error, Result};
use crate::load_flow::{solve, BusInjection, PowerFlowSolution, SolverOptions};
use crate::network::{RadialNetwork, SectorMap, SLACK_BUS};
use crate::profiles::{compose_bus_injection, HourlyProfileSet, LoadFlags, MixConfig, HOURS};

/// Multiplier on the baseline cost charged for every failed hour.
pub const FAILED_HOUR_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveWeights {
    pub w1: f64,
    pub w2: f64,
    /// Cost per kWh of battery bound overshoot.
    pub penalty_coeff: f64,
    /// Divide loss and deviation by their grid-only baseline totals.
    pub normalize: bool,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            w1: 0.5,
            w2: 0.5,
            penalty_coeff: 1.0,
            normalize: true,
        }
    }
}

impl ObjectiveWeights {
    pub fn raw(w1: f64, w2: f64) -> Self {
        Self {
            w1,
            w2,
            penalty_coeff: 1.0,
            normalize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !nonneg(self.w1) || !nonneg(self.w2) || self.w1 + self.w2 == 0.0 {
            return Err(Error::Config(format!(
                "weights must be >= 0 and not both zero (got {}, {})",
                self.w1, self.w2
            )));
        }
        if !(self.penalty_coeff.is_finite() && self.penalty_coeff > 0.0) {
            return Err(Error::Config("penalty_coeff must be > 0".into()));
        }
        Ok(())
    }
}

/// Everything a daily evaluation reads. All borrowed and immutable, so one
/// instance can serve many concurrent evaluations.
#[derive(Debug, Clone, Copy)]
pub struct DayInputs<'a> {
    pub net: &'a RadialNetwork,
    pub sectors: &'a SectorMap,
    pub profiles: &'a HourlyProfileSet,
    pub mix: &'a MixConfig,
    pub battery: &'a BatteryParams,
    pub solver: SolverOptions,
}

/// Reference totals used to normalize the cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostScale {
    pub p_loss_ref_kw: f64,
    pub v_dev_ref: f64,
    pub failed_hour_penalty: f64,
}

impl CostScale {
    /// Evaluates the grid-only zero-schedule day and derives reference
    /// totals from it. In raw mode both references are 1.
    pub fn calibrate(inputs: &DayInputs<'_>, weights: &ObjectiveWeights) -> Result<Self> {
        weights.validate()?;
        let unit = Self {
            p_loss_ref_kw: 1.0,
            v_dev_ref: 1.0,
            failed_hour_penalty: 0.0,
        };
        let zero = DispatchSchedule::zeros(inputs.sectors.sector_count() as usize);
        let base = evaluate_day(inputs, LoadFlags::GRID_ONLY, &zero, weights, &unit)?;
        let mut scale = unit;
        if weights.normalize {
            if base.p_loss_total_kw > 0.0 {
                scale.p_loss_ref_kw = base.p_loss_total_kw;
            }
            if base.v_dev_total > 0.0 {
                scale.v_dev_ref = base.v_dev_total;
            }
        }
        let base_cost = weights.w1 * base.p_loss_total_kw / scale.p_loss_ref_kw
            + weights.w2 * base.v_dev_total / scale.v_dev_ref;
        scale.failed_hour_penalty = FAILED_HOUR_FACTOR * base_cost.max(1.0);
        Ok(scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Sum of hourly I^2 R losses (kW summed over hourly snapshots).
    pub p_loss_total_kw: f64,
    pub q_loss_total_kvar: f64,
    /// Sum over hours and non-slack buses of |V_rated - V| (p.u.).
    pub v_dev_total: f64,
    pub avg_v_dev_pct: f64,
    pub battery_overshoot_kwh: f64,
    pub failed_hours: usize,
    /// Penalty contribution to `cost`.
    pub penalty: f64,
    pub cost: f64,
}

pub fn evaluate_day(
    inputs: &DayInputs<'_>,
    flags: LoadFlags,
    schedule: &DispatchSchedule,
    weights: &ObjectiveWeights,
    scale: &CostScale,
) -> Result<CostBreakdown> {
    evaluate(inputs, flags, schedule, weights, scale, false).map(|(b, _)| b)
}

/// As [`evaluate_day`], also returning each hour's solution (`None` for a
/// failed hour).
pub fn evaluate_day_detailed(
    inputs: &DayInputs<'_>,
    flags: LoadFlags,
    schedule: &DispatchSchedule,
    weights: &ObjectiveWeights,
    scale: &CostScale,
) -> Result<(CostBreakdown, Vec<Option<PowerFlowSolution>>)> {
    evaluate(inputs, flags, schedule, weights, scale, true)
}

/// The no-battery scenarios: zero schedule with only the flagged load
/// components.
pub fn scenario_baseline(
    inputs: &DayInputs<'_>,
    flags: LoadFlags,
    weights: &ObjectiveWeights,
    scale: &CostScale,
) -> Result<CostBreakdown> {
    let zero = DispatchSchedule::zeros(inputs.sectors.sector_count() as usize);
    evaluate_day(inputs, flags, &zero, weights, scale)
}

/// Injection for one hour under `schedule`.
pub fn hour_injection(
    inputs: &DayInputs<'_>,
    flags: LoadFlags,
    schedule: &DispatchSchedule,
    hour: usize,
) -> BusInjection {
    let net = inputs.net;
    let mut inj = BusInjection::zeros(net.bus_count());
    for (i, bus) in net.buses.iter().enumerate() {
        if bus.id == SLACK_BUS {
            continue;
        }
        let battery_kw = inputs
            .sectors
            .sector_of(bus.id)
            .map_or(0.0, |s| schedule.command(s, hour));
        let (p, q) = compose_bus_injection(
            bus,
            &inputs.mix.bus(bus.id),
            inputs.profiles,
            hour,
            battery_kw,
            flags,
        );
        inj.p_kw[i] = p;
        inj.q_kvar[i] = q;
    }
    inj
}

fn evaluate(
    inputs: &DayInputs<'_>,
    flags: LoadFlags,
    schedule: &DispatchSchedule,
    weights: &ObjectiveWeights,
    scale: &CostScale,
    keep: bool,
) -> Result<(CostBreakdown, Vec<Option<PowerFlowSolution>>)> {
    let net = inputs.net;
    let overshoot = schedule_penalty(net, inputs.sectors, inputs.mix, inputs.battery, schedule)?;
    let slack = net.slack_index();

    let mut p_loss = 0.0;
    let mut q_loss = 0.0;
    let mut v_dev = 0.0;
    let mut failed = 0;
    let mut hours = Vec::with_capacity(if keep { HOURS } else { 0 });
    for h in 0..HOURS {
        let inj = hour_injection(inputs, flags, schedule, h);
        let sol = match solve(net, &inj, &inputs.solver) {
            Ok(sol) if sol.converged => sol,
            Ok(_) | Err(Error::VoltageCollapse { .. }) => {
                failed += 1;
                if keep {
                    hours.push(None);
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        p_loss += sol.p_loss_kw;
        q_loss += sol.q_loss_kvar;
        v_dev += sol
            .v_pu
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != slack)
            .map(|(_, v)| (net.v_rated_pu - v).abs())
            .sum::<f64>();
        if keep {
            hours.push(Some(sol));
        }
    }

    let solved = HOURS - failed;
    let n_load = net.bus_count() - 1;
    let avg_v_dev_pct = if solved > 0 && n_load > 0 {
        100.0 * v_dev / (n_load * solved) as f64
    } else {
        0.0
    };
    let penalty = weights.penalty_coeff * overshoot + failed as f64 * scale.failed_hour_penalty;
    let cost =
        weights.w1 * p_loss / scale.p_loss_ref_kw + weights.w2 * v_dev / scale.v_dev_ref + penalty;
    Ok((
        CostBreakdown {
            p_loss_total_kw: p_loss,
            q_loss_total_kvar: q_loss,
            v_dev_total: v_dev,
            avg_v_dev_pct,
            battery_overshoot_kwh: overshoot,
            failed_hours: failed,
            penalty,
            cost,
        },
        hours,
    ))
}
