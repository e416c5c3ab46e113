//! Backward/forward sweep load flow for radial feeders.
//!
//! Loads are constant power. Each iteration recomputes load currents from
//! the latest voltage estimate, accumulates branch currents from the leaves
//! back to the slack (KCL), then walks outwards applying the series voltage
//! drop of every line (Ohm's law).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::RadialNetwork;

/// Any bus falling below this magnitude aborts the sweep as infeasible.
pub const COLLAPSE_V_PU: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config(format!(
                "solver needs tol > 0 and max_iter >= 1 (got {}, {})",
                self.tol, self.max_iter
            )));
        }
        Ok(())
    }
}

/// Net consumption per bus for one hour, aligned with `net.buses`.
/// Positive values are consumption. The slack entry is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct BusInjection {
    pub p_kw: Vec<f64>,
    pub q_kvar: Vec<f64>,
}

impl BusInjection {
    pub fn zeros(n: usize) -> Self {
        Self {
            p_kw: vec![0.0; n],
            q_kvar: vec![0.0; n],
        }
    }

    /// The network's own spot loads.
    pub fn nominal(net: &RadialNetwork) -> Self {
        Self {
            p_kw: net.buses.iter().map(|b| b.p_load_kw).collect(),
            q_kvar: net.buses.iter().map(|b| b.q_load_kvar).collect(),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            p_kw: self.p_kw.iter().map(|p| p * k).collect(),
            q_kvar: self.q_kvar.iter().map(|q| q * k).collect(),
        }
    }

    fn validate(&self, net: &RadialNetwork) -> Result<()> {
        let n = net.bus_count();
        if self.p_kw.len() != n || self.q_kvar.len() != n {
            return Err(Error::Config(format!(
                "injection has {} / {} entries for {n} buses",
                self.p_kw.len(),
                self.q_kvar.len()
            )));
        }
        if let Some(i) = (0..n).find(|&i| !(self.p_kw[i].is_finite() && self.q_kvar[i].is_finite()))
        {
            return Err(Error::Config(format!(
                "non-finite injection at bus {}",
                net.buses[i].id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    /// Voltage magnitude per bus (p.u.), aligned with `net.buses`.
    pub v_pu: Vec<f64>,
    /// Voltage angle per bus (rad).
    pub v_angle: Vec<f64>,
    /// Current magnitude per line (A), aligned with `net.lines`.
    pub i_line_a: Vec<f64>,
    pub p_loss_kw: f64,
    pub q_loss_kvar: f64,
    /// Power delivered by the slack bus into the feeder.
    pub p_slack_kw: f64,
    pub q_slack_kvar: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves one snapshot. Non-convergence is reported through
/// `converged = false`; a collapsing voltage is an error.
pub fn solve(
    net: &RadialNetwork,
    inj: &BusInjection,
    opts: &SolverOptions,
) -> Result<PowerFlowSolution> {
    opts.validate()?;
    inj.validate(net)?;

    let n = net.bus_count();
    let slack = net.slack_index();
    let s_base_kw = net.base_mva * 1000.0;
    let z_base = net.z_base_ohm();
    let order = net.bfs_order();

    let load: Vec<Complex64> = (0..n)
        .map(|i| {
            if i == slack {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(inj.p_kw[i], inj.q_kvar[i]) / s_base_kw
            }
        })
        .collect();
    let z: Vec<Complex64> = (0..n)
        .map(|i| match net.feeder_line(i) {
            Some(k) => Complex64::new(net.lines[k].r_ohm, net.lines[k].x_ohm) / z_base,
            None => Complex64::new(0.0, 0.0),
        })
        .collect();

    let v_slack = Complex64::new(net.v_rated_pu, 0.0);
    let mut v = vec![v_slack; n];
    // Current through the line feeding each bus.
    let mut branch = vec![Complex64::new(0.0, 0.0); n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;

        for &b in order.iter().rev() {
            if b == slack {
                continue;
            }
            let mut i_b = (load[b] / v[b]).conj();
            for &c in net.children(b) {
                i_b += branch[c];
            }
            branch[b] = i_b;
        }

        let mut max_dv = 0.0f64;
        for &b in order {
            let Some(p) = net.parent(b) else { continue };
            let v_new = v[p] - z[b] * branch[b];
            let mag = v_new.norm();
            if !mag.is_finite() || mag < COLLAPSE_V_PU {
                return Err(Error::VoltageCollapse {
                    bus: net.buses[b].id,
                    v_pu: mag,
                    iteration: iterations,
                });
            }
            max_dv = max_dv.max((v_new - v[b]).norm());
            v[b] = v_new;
        }

        if max_dv < opts.tol {
            converged = true;
            break;
        }
    }

    let i_base = net.i_base_a();
    let mut i_line_a = vec![0.0; net.lines.len()];
    let mut loss = Complex64::new(0.0, 0.0);
    for b in 0..n {
        if let Some(k) = net.feeder_line(b) {
            let i2 = branch[b].norm_sqr();
            i_line_a[k] = branch[b].norm() * i_base;
            loss += z[b] * i2;
        }
    }
    let from_slack: Complex64 = net.children(slack).iter().map(|&c| branch[c]).sum();
    let s_slack = v_slack * from_slack.conj();

    Ok(PowerFlowSolution {
        v_pu: v.iter().map(|x| x.norm()).collect(),
        v_angle: v.iter().map(|x| x.arg()).collect(),
        i_line_a,
        p_loss_kw: loss.re * s_base_kw,
        q_loss_kvar: loss.im * s_base_kw,
        p_slack_kw: s_slack.re * s_base_kw,
        q_slack_kvar: s_slack.im * s_base_kw,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpacityViolation {
    pub from_bus: u32,
    pub to_bus: u32,
    pub current_a: f64,
    pub ampacity_a: f64,
    /// How far the current exceeds the rating (A).
    pub margin_a: f64,
}

pub fn check_ampacity(net: &RadialNetwork, sol: &PowerFlowSolution) -> Vec<AmpacityViolation> {
    net.lines
        .iter()
        .zip(&sol.i_line_a)
        .filter(|(l, &i)| i > l.ampacity_a)
        .map(|(l, &i)| AmpacityViolation {
            from_bus: l.from_bus,
            to_bus: l.to_bus,
            current_a: i,
            ampacity_a: l.ampacity_a,
            margin_a: i - l.ampacity_a,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageViolation {
    pub bus: u32,
    pub v_pu: f64,
    pub deviation_pu: f64,
}

/// Buses whose magnitude lies more than `band` away from 1.0 p.u.
pub fn check_voltage_band(
    net: &RadialNetwork,
    sol: &PowerFlowSolution,
    band: f64,
) -> Vec<VoltageViolation> {
    net.buses
        .iter()
        .zip(&sol.v_pu)
        .filter_map(|(b, &v)| {
            let dev = (v - net.v_rated_pu).abs();
            (dev > band).then_some(VoltageViolation {
                bus: b.id,
                v_pu: v,
                deviation_pu: dev,
            })
        })
        .collect()
}
