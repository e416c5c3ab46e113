//! Utility-dispatchable share of residential battery storage.
//!
//! A bus holds `beta * N_user * E_user` kWh of controllable storage. The
//! optimizer issues one kW command per sector and hour; every bus in the
//! sector follows it, and any hour that would push a battery outside
//! `[0, E_max]` is clamped and charged to a penalty instead of rejected.

use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{RadialNetwork, SectorMap, SLACK_BUS};
use crate::profiles::{Hourly, MixConfig, HOURS};

/// Energy excursions smaller than this are treated as rounding, not
/// violations.
pub const BOUND_EPS_KWH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityBasis {
    /// Only battery-equipped homes contribute storage.
    BatteryHomes,
    /// Every home at the bus counts toward `N_user`.
    AllHomes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryParams {
    /// Permitted percentage of storage the utility may command, in [0, 1].
    pub beta: f64,
    pub e_bt_user_kwh: f64,
    pub p_max_kw_per_home: f64,
    pub soc_init_pct: f64,
    /// 1.0 means lossless; otherwise split evenly between charge and discharge.
    pub round_trip_efficiency: f64,
    pub capacity_basis: CapacityBasis,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            beta: 0.3,
            e_bt_user_kwh: 10.0,
            p_max_kw_per_home: 5.0,
            soc_init_pct: 50.0,
            round_trip_efficiency: 1.0,
            capacity_basis: CapacityBasis::BatteryHomes,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.beta) {
            return Err(Error::Config(format!(
                "beta must lie in [0, 1], got {}",
                self.beta
            )));
        }
        if !(self.e_bt_user_kwh.is_finite() && self.e_bt_user_kwh >= 0.0) {
            return Err(Error::Config("e_bt_user_kwh must be >= 0".into()));
        }
        if !(self.p_max_kw_per_home.is_finite() && self.p_max_kw_per_home > 0.0) {
            return Err(Error::Config("p_max_kw_per_home must be > 0".into()));
        }
        if !(0.0..=100.0).contains(&self.soc_init_pct) {
            return Err(Error::Config("soc_init_pct must lie in [0, 100]".into()));
        }
        if !(self.round_trip_efficiency > 0.0 && self.round_trip_efficiency <= 1.0) {
            return Err(Error::Config(
                "round_trip_efficiency must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Homes counted as `N_user` at a bus.
    pub fn n_users(&self, mix: &MixConfig, bus_id: u32, n_residences: u32) -> u32 {
        match self.capacity_basis {
            CapacityBasis::BatteryHomes => mix.bus(bus_id).n_bbsr,
            CapacityBasis::AllHomes => n_residences,
        }
    }

    /// Largest per-bus charge or discharge command for `n_users` homes.
    pub fn power_cap_kw(&self, n_users: u32) -> f64 {
        self.beta * n_users as f64 * self.p_max_kw_per_home
    }
}

/// Dispatchable energy at one bus: `beta * n_users * e_bt_user_kwh`.
pub fn capacity(params: &BatteryParams, n_users: u32) -> f64 {
    params.beta * n_users as f64 * params.e_bt_user_kwh
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusBatteryState {
    pub e_max_kwh: f64,
    pub e_kwh: f64,
    pub soc_pct: f64,
}

impl BusBatteryState {
    pub fn new(e_max_kwh: f64, e_kwh: f64) -> Self {
        let mut s = Self {
            e_max_kwh,
            e_kwh,
            soc_pct: 0.0,
        };
        s.soc_pct = soc(&s);
        s
    }

    pub fn at_soc(e_max_kwh: f64, soc_pct: f64) -> Self {
        Self::new(e_max_kwh, e_max_kwh * soc_pct / 100.0)
    }
}

/// State of charge in percent; an empty-capacity battery reads 0 %.
pub fn soc(state: &BusBatteryState) -> f64 {
    if state.e_max_kwh > 0.0 {
        state.e_kwh / state.e_max_kwh * 100.0
    } else {
        0.0
    }
}

/// A step that would leave `[0, E_max]`. `clamped` is the state after
/// saturating at the violated bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsViolation {
    pub overshoot_kwh: f64,
    pub clamped: BusBatteryState,
}

/// One interval of `E(t) = E(t-1) + P * dt` with lossless conversion.
pub fn step_energy(
    state: &BusBatteryState,
    p_bt_kw: f64,
    dt_h: f64,
) -> std::result::Result<BusBatteryState, BoundsViolation> {
    step_energy_with_efficiency(state, p_bt_kw, dt_h, 1.0)
}

pub fn step_energy_with_efficiency(
    state: &BusBatteryState,
    p_bt_kw: f64,
    dt_h: f64,
    round_trip_efficiency: f64,
) -> std::result::Result<BusBatteryState, BoundsViolation> {
    assert!(dt_h > 0.0, "interval must be positive");
    let delta = if round_trip_efficiency == 1.0 {
        p_bt_kw * dt_h
    } else {
        let one_way = round_trip_efficiency.sqrt();
        if p_bt_kw >= 0.0 {
            p_bt_kw * dt_h * one_way
        } else {
            p_bt_kw * dt_h / one_way
        }
    };
    let e = state.e_kwh + delta;
    if e < -BOUND_EPS_KWH {
        Err(BoundsViolation {
            overshoot_kwh: -e,
            clamped: BusBatteryState::new(state.e_max_kwh, 0.0),
        })
    } else if e > state.e_max_kwh + BOUND_EPS_KWH {
        Err(BoundsViolation {
            overshoot_kwh: e - state.e_max_kwh,
            clamped: BusBatteryState::new(state.e_max_kwh, state.e_max_kwh),
        })
    } else {
        Ok(BusBatteryState::new(
            state.e_max_kwh,
            e.clamp(0.0, state.e_max_kwh),
        ))
    }
}

/// Per-bus battery command (kW, positive = charge) for each sector and hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSchedule {
    pub p_bt: Vec<Hourly>,
}

impl DispatchSchedule {
    pub fn zeros(sectors: usize) -> Self {
        Self {
            p_bt: vec![[0.0; HOURS]; sectors],
        }
    }

    pub fn sectors(&self) -> usize {
        self.p_bt.len()
    }

    /// Command for the 1-based `sector` at `hour`.
    pub fn command(&self, sector: u32, hour: usize) -> f64 {
        self.p_bt[sector as usize - 1][hour]
    }

    /// Decodes a flat optimizer position laid out sector-major.
    pub fn from_position(x: &[f64], sectors: usize) -> Result<Self> {
        if x.len() != sectors * HOURS {
            return Err(Error::Config(format!(
                "position has {} values, expected {} sectors x {HOURS} hours",
                x.len(),
                sectors
            )));
        }
        Ok(Self {
            p_bt: x
                .chunks_exact(HOURS)
                .map(|c| c.try_into().expect("chunk of 24"))
                .collect(),
        })
    }

    pub fn to_position(&self) -> Vec<f64> {
        self.p_bt.iter().flatten().copied().collect()
    }

    /// `sector,hour,p_kw` with 1-based sectors.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sector,hour,p_kw\n");
        for (s, row) in self.p_bt.iter().enumerate() {
            for (h, p) in row.iter().enumerate() {
                let _ = writeln!(out, "{},{h},{p:.5}", s + 1);
            }
        }
        out
    }

    pub fn from_csv<R: Read>(src: R, sectors: usize) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            sector: usize,
            hour: usize,
            p_kw: f64,
        }
        let mut seen = vec![[false; HOURS]; sectors];
        let mut out = Self::zeros(sectors);
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(src);
        for row in rdr.deserialize::<Row>() {
            let r = row.map_err(|e| Error::Schema(format!("schedule: {e}")))?;
            if r.sector == 0 || r.sector > sectors || r.hour >= HOURS || !r.p_kw.is_finite() {
                return Err(Error::Schema(format!(
                    "schedule row ({}, {}) out of range",
                    r.sector, r.hour
                )));
            }
            seen[r.sector - 1][r.hour] = true;
            out.p_bt[r.sector - 1][r.hour] = r.p_kw;
        }
        if seen.iter().flatten().any(|s| !s) {
            return Err(Error::Schema("schedule is missing sector-hours".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryTrajectory {
    pub bus_id: u32,
    pub sector: u32,
    pub e_max_kwh: f64,
    /// Stored energy at hour boundaries 0..=24.
    pub energy_kwh: Vec<f64>,
    pub soc_pct: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTrace {
    pub buses: Vec<BatteryTrajectory>,
    /// Total clamped overshoot over all buses and hours (kWh).
    pub penalty_kwh: f64,
}

/// Runs the schedule hour by hour on every non-slack bus.
pub fn simulate_schedule(
    net: &RadialNetwork,
    sectors: &SectorMap,
    mix: &MixConfig,
    params: &BatteryParams,
    schedule: &DispatchSchedule,
) -> Result<ScheduleTrace> {
    check_dims(sectors, schedule)?;
    let mut buses = Vec::with_capacity(net.bus_count() - 1);
    let mut penalty = 0.0;
    for b in net.buses.iter().filter(|b| b.id != SLACK_BUS) {
        let sector = sectors
            .sector_of(b.id)
            .expect("sector map covers every load bus");
        let e_max = capacity(params, params.n_users(mix, b.id, b.n_residences));
        let mut state = BusBatteryState::at_soc(e_max, params.soc_init_pct);
        let mut energy = Vec::with_capacity(HOURS + 1);
        let mut socs = Vec::with_capacity(HOURS + 1);
        energy.push(state.e_kwh);
        socs.push(state.soc_pct);
        for h in 0..HOURS {
            let p = schedule.command(sector, h);
            state = match step_energy_with_efficiency(&state, p, 1.0, params.round_trip_efficiency)
            {
                Ok(s) => s,
                Err(v) => {
                    penalty += v.overshoot_kwh;
                    v.clamped
                }
            };
            energy.push(state.e_kwh);
            socs.push(state.soc_pct);
        }
        buses.push(BatteryTrajectory {
            bus_id: b.id,
            sector,
            e_max_kwh: e_max,
            energy_kwh: energy,
            soc_pct: socs,
        });
    }
    Ok(ScheduleTrace {
        buses,
        penalty_kwh: penalty,
    })
}

/// Overshoot only, without building trajectories.
pub fn schedule_penalty(
    net: &RadialNetwork,
    sectors: &SectorMap,
    mix: &MixConfig,
    params: &BatteryParams,
    schedule: &DispatchSchedule,
) -> Result<f64> {
    check_dims(sectors, schedule)?;
    let mut penalty = 0.0;
    for b in net.buses.iter().filter(|b| b.id != SLACK_BUS) {
        let sector = sectors
            .sector_of(b.id)
            .expect("sector map covers every load bus");
        let e_max = capacity(params, params.n_users(mix, b.id, b.n_residences));
        let mut state = BusBatteryState::at_soc(e_max, params.soc_init_pct);
        for h in 0..HOURS {
            let p = schedule.command(sector, h);
            state = match step_energy_with_efficiency(&state, p, 1.0, params.round_trip_efficiency)
            {
                Ok(s) => s,
                Err(v) => {
                    penalty += v.overshoot_kwh;
                    v.clamped
                }
            };
        }
    }
    Ok(penalty)
}

fn check_dims(sectors: &SectorMap, schedule: &DispatchSchedule) -> Result<()> {
    if schedule.sectors() != sectors.sector_count() as usize {
        return Err(Error::Config(format!(
            "schedule has {} sectors, sector map has {}",
            schedule.sectors(),
            sectors.sector_count()
        )));
    }
    Ok(())
}

/// Per-sector command limit: the smallest bus cap within the sector.
pub fn sector_power_caps(
    net: &RadialNetwork,
    sectors: &SectorMap,
    mix: &MixConfig,
    params: &BatteryParams,
) -> Vec<f64> {
    (1..=sectors.sector_count())
        .map(|s| {
            sectors
                .buses_in(s)
                .into_iter()
                .map(|id| {
                    let n_res = net.buses[net.index_of(id).unwrap()].n_residences;
                    params.power_cap_kw(params.n_users(mix, id, n_res))
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}
