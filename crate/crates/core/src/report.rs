//! Output files for a run. Everything is rendered in memory first and only
//! then written, so a failure never leaves a partial set behind. Tables use
//! fixed 5-decimal formatting and nothing time-dependent is emitted, which
//! keeps reruns byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::load_flow::{
    check_ampacity, check_voltage_band, AmpacityViolation, PowerFlowSolution, VoltageViolation,
};
use crate::network::RadialNetwork;
use crate::reference::ReferenceValues;
use crate::scenario::{improvement_report, ScenarioName, ScenarioOutcome, SweepResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusVoltage {
    pub bus: u32,
    pub v_pu: f64,
    pub angle_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineCurrent {
    pub from_bus: u32,
    pub to_bus: u32,
    pub current_a: f64,
    pub ampacity_a: f64,
}

/// One solved hour in report form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadFlowReport {
    /// `"nominal"` or `"hour <h>"`.
    pub load: String,
    pub base_kv: f64,
    pub base_mva: f64,
    pub converged: bool,
    pub iterations: usize,
    pub p_loss_kw: f64,
    pub q_loss_kvar: f64,
    pub p_slack_kw: f64,
    pub q_slack_kvar: f64,
    pub min_v_pu: f64,
    pub buses: Vec<BusVoltage>,
    pub lines: Vec<LineCurrent>,
    pub ampacity_violations: Vec<AmpacityViolation>,
    pub voltage_violations: Vec<VoltageViolation>,
}

impl LoadFlowReport {
    pub fn new(net: &RadialNetwork, sol: &PowerFlowSolution, load: &str, band: f64) -> Self {
        Self {
            load: load.to_string(),
            base_kv: net.base_kv,
            base_mva: net.base_mva,
            converged: sol.converged,
            iterations: sol.iterations,
            p_loss_kw: sol.p_loss_kw,
            q_loss_kvar: sol.q_loss_kvar,
            p_slack_kw: sol.p_slack_kw,
            q_slack_kvar: sol.q_slack_kvar,
            min_v_pu: sol.v_pu.iter().copied().fold(f64::INFINITY, f64::min),
            buses: net
                .buses
                .iter()
                .enumerate()
                .map(|(i, b)| BusVoltage {
                    bus: b.id,
                    v_pu: sol.v_pu[i],
                    angle_rad: sol.v_angle[i],
                })
                .collect(),
            lines: net
                .lines
                .iter()
                .zip(&sol.i_line_a)
                .map(|(l, &i)| LineCurrent {
                    from_bus: l.from_bus,
                    to_bus: l.to_bus,
                    current_a: i,
                    ampacity_a: l.ampacity_a,
                })
                .collect(),
            ampacity_violations: check_ampacity(net, sol),
            voltage_violations: check_voltage_band(net, sol, band),
        }
    }
}

/// Everything one CLI invocation produced.
#[derive(Debug, Clone, Default)]
pub struct RunResults {
    pub loadflow: Option<LoadFlowReport>,
    pub scenarios: Vec<ScenarioOutcome>,
    pub sweep: Option<SweepResult>,
    /// Bus ids aligned with the hourly voltages of each scenario.
    pub bus_ids: Vec<u32>,
    pub slack_bus: u32,
    /// Written to `run_meta.json` when present.
    pub config: Option<RunConfig>,
}

impl RunResults {
    pub fn is_empty(&self) -> bool {
        self.loadflow.is_none() && self.scenarios.is_empty() && self.sweep.is_none()
    }
}

/// Writes the report files for `results` into `outdir` and returns their
/// paths in write order. Empty results write nothing.
pub fn emit_reports(results: &RunResults, outdir: &Path) -> Result<Vec<PathBuf>> {
    let files = render_reports(results)?;
    if files.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let mut manifest = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = outdir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        manifest.push(path);
    }
    Ok(manifest)
}

/// File name and content of every report, without touching the disk.
pub fn render_reports(results: &RunResults) -> Result<Vec<(String, String)>> {
    if results.is_empty() {
        return Ok(Vec::new());
    }
    let reference = ReferenceValues::bundled();
    let mut files = Vec::new();
    files.push(("summary.txt".to_string(), summary_text(results, &reference)));

    if let Some(lf) = &results.loadflow {
        files.push(("loadflow.json".into(), to_json(lf)?));
    }

    if !results.scenarios.is_empty() {
        files.push(("scenario.json".into(), scenario_json(results, &reference)?));
        let single = results.scenarios.len() == 1;
        for out in &results.scenarios {
            let suffix = if single {
                String::new()
            } else {
                format!("_{}", out.spec.name)
            };
            files.push((format!("voltages{suffix}.csv"), voltages_csv(out, results)));
            if let Some(s) = &out.schedule {
                files.push((format!("schedule{suffix}.csv"), s.to_csv()));
            }
        }
    }

    if let Some(sw) = &results.sweep {
        files.push(("sweep.csv".into(), sweep_table_csv(sw)));
        files.push(("sweep_cells.csv".into(), sweep_cells_csv(sw)));
    }

    if let Some(cfg) = &results.config {
        files.push(("run_meta.json".into(), to_json(cfg)?));
    }
    Ok(files)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn f5(v: f64) -> String {
    format!("{v:.5}")
}

/// Alpha rows by beta columns of the sweep cost; failed cells read `failed`.
pub fn sweep_table_csv(sw: &SweepResult) -> String {
    let mut s = String::from("alpha");
    for b in &sw.betas {
        s.push(',');
        s.push_str(&f5(*b));
    }
    s.push('\n');
    for (i, a) in sw.alphas.iter().enumerate() {
        s.push_str(&f5(*a));
        for j in 0..sw.betas.len() {
            s.push(',');
            match sw.cost(i, j) {
                Some(c) => s.push_str(&f5(c)),
                None => s.push_str("failed"),
            }
        }
        s.push('\n');
    }
    s
}

fn sweep_cells_csv(sw: &SweepResult) -> String {
    let mut s = String::from("alpha,beta,seed,cost,p_loss_kw,avg_v_dev_pct,feasible,error\n");
    for c in &sw.cells {
        let (cost, loss, dev) = match &c.breakdown {
            Some(b) => (f5(b.cost), f5(b.p_loss_total_kw), f5(b.avg_v_dev_pct)),
            None => ("failed".into(), String::new(), String::new()),
        };
        let err = c.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(
            s,
            "{},{},{},{cost},{loss},{dev},{},{err}",
            f5(c.alpha),
            f5(c.beta),
            c.seed,
            c.feasible
        );
    }
    s
}

/// `bus,hour,v_pu` for every non-slack bus; unsolved hours read `failed`.
fn voltages_csv(out: &ScenarioOutcome, results: &RunResults) -> String {
    let mut s = String::from("bus,hour,v_pu\n");
    for (h, hour) in out.hourly_v_pu.iter().enumerate() {
        for (i, &id) in results.bus_ids.iter().enumerate() {
            if id == results.slack_bus {
                continue;
            }
            match hour {
                Some(v) => {
                    let _ = writeln!(s, "{id},{h},{}", f5(v[i]));
                }
                None => {
                    let _ = writeln!(s, "{id},{h},failed");
                }
            }
        }
    }
    s
}

fn scenario_json(results: &RunResults, reference: &ReferenceValues) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a> {
        scenarios: &'a [ScenarioOutcome],
        improvements: Vec<crate::scenario::Improvement>,
        reference: &'a ReferenceValues,
    }
    let improvements = match results
        .scenarios
        .iter()
        .find(|o| o.spec.name == ScenarioName::Proposed)
    {
        Some(p) => {
            let baselines: Vec<_> = results
                .scenarios
                .iter()
                .filter(|o| o.spec.name != ScenarioName::Proposed)
                .map(|o| (o.spec.name.to_string(), o.breakdown.clone()))
                .collect();
            improvement_report(&baselines, &p.breakdown)
        }
        None => Vec::new(),
    };
    to_json(&Doc {
        scenarios: &results.scenarios,
        improvements,
        reference,
    })
}

fn pct_diff(computed: f64, reference: f64) -> String {
    format!("{:+.2}%", (computed - reference) / reference * 100.0)
}

fn summary_text(results: &RunResults, reference: &ReferenceValues) -> String {
    let label = &reference.label;
    let mut s = String::new();
    let _ = writeln!(s, "feeder-dispatch run summary");
    let _ = writeln!(s, "values marked \"{label}\" are shown for comparison only");

    if let Some(lf) = &results.loadflow {
        let base = &reference.base_case;
        let _ = writeln!(s, "\n== load flow ({}) ==", lf.load);
        let _ = writeln!(s, "base            {} kV, {} MVA", lf.base_kv, lf.base_mva);
        let _ = writeln!(
            s,
            "converged       {} ({} iterations)",
            lf.converged, lf.iterations
        );
        let _ = writeln!(s, "p_loss_kw       {}", f5(lf.p_loss_kw));
        let _ = writeln!(s, "q_loss_kvar     {}", f5(lf.q_loss_kvar));
        let _ = writeln!(s, "min_v_pu        {}", f5(lf.min_v_pu));
        let _ = writeln!(s, "ampacity viol.  {}", lf.ampacity_violations.len());
        let _ = writeln!(s, "voltage viol.   {}", lf.voltage_violations.len());
        if lf.load == "nominal" {
            let _ = writeln!(
                s,
                "{label} at {} kV: {} kW / {} kVAR (computed {} / {})",
                base.base_kv,
                base.p_loss_kw,
                base.q_loss_kvar,
                pct_diff(lf.p_loss_kw, base.p_loss_kw),
                pct_diff(lf.q_loss_kvar, base.q_loss_kvar)
            );
            if (lf.base_kv - base.base_kv).abs() > 1e-9 {
                let _ = writeln!(
                    s,
                    "note: this run uses a {} kV base; the reference figure is quoted at {} kV",
                    lf.base_kv, base.base_kv
                );
            }
        }
    }

    if !results.scenarios.is_empty() {
        let _ = writeln!(s, "\n== scenarios ==");
        let _ = writeln!(
            s,
            "{:<14} {:>6} {:>6} {:>12} {:>9} {:>10} {:>8} | {:>10} {:>8} {:>10}",
            "scenario",
            "alpha",
            "beta",
            "p_loss_kw",
            "avg_dev%",
            "cost",
            "feasible",
            "ref_loss",
            "ref_dev%",
            "ref_cost"
        );
        for o in &results.scenarios {
            let b = &o.breakdown;
            let r = reference.scenario(o.spec.name.as_str());
            let refs = match r {
                Some(r) => format!(
                    "{:>10.1} {:>8.2} {:>10.5}",
                    r.p_loss_kw, r.avg_v_dev_pct, r.cost
                ),
                None => format!("{:>10} {:>8} {:>10}", "-", "-", "-"),
            };
            let _ = writeln!(
                s,
                "{:<14} {:>6.2} {:>6.2} {:>12.5} {:>9.5} {:>10.5} {:>8} | {refs}",
                o.spec.name.as_str(),
                o.spec.alpha,
                o.spec.beta,
                b.p_loss_total_kw,
                b.avg_v_dev_pct,
                b.cost,
                o.feasible
            );
        }
        let _ = writeln!(s, "(ref_* columns: {label})");
        for o in &results.scenarios {
            let _ = writeln!(
                s,
                "{}: min_v {} max_v {} voltage viol. {} ampacity viol. {} failed hours {}",
                o.spec.name,
                f5(o.min_v_pu),
                f5(o.max_v_pu),
                o.voltage_violations,
                o.ampacity_violations,
                o.breakdown.failed_hours
            );
            if let Some(sw) = &o.swarm {
                let _ = writeln!(
                    s,
                    "{}: swarm seed {} evaluations {} iterations {} fell back to zero {}",
                    o.spec.name, sw.seed, sw.evaluations, sw.iterations, sw.fell_back_to_zero
                );
            }
        }
        if let Some(p) = results
            .scenarios
            .iter()
            .find(|o| o.spec.name == ScenarioName::Proposed)
        {
            let pr = reference.scenario("proposed");
            for o in results
                .scenarios
                .iter()
                .filter(|o| o.spec.name != ScenarioName::Proposed)
            {
                let imp = &improvement_report(
                    &[(o.spec.name.to_string(), o.breakdown.clone())],
                    &p.breakdown,
                )[0];
                let fmt = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.2}%"));
                let published = match (reference.scenario(o.spec.name.as_str()), pr) {
                    (Some(b), Some(pr)) => format!(
                        " ({label}: loss {:.2}%, cost {:.2}%)",
                        (b.p_loss_kw - pr.p_loss_kw) / b.p_loss_kw * 100.0,
                        (b.cost - pr.cost) / b.cost * 100.0
                    ),
                    _ => String::new(),
                };
                let _ = writeln!(
                    s,
                    "proposed vs {}: loss {} avg_dev {} cost {}{published}",
                    o.spec.name,
                    fmt(imp.loss_pct),
                    fmt(imp.avg_v_dev_pct),
                    fmt(imp.cost_pct)
                );
            }
        }
    }

    if let Some(sw) = &results.sweep {
        let _ = writeln!(s, "\n== alpha/beta sweep (proposed cost) ==");
        s.push_str(&sweep_table_text(sw, |i, j| sw.cost(i, j)));
        match sw.argmin {
            Some((i, j)) => {
                let _ = writeln!(
                    s,
                    "minimum {} at alpha {} beta {}",
                    f5(sw.cost(i, j).unwrap_or(f64::NAN)),
                    f5(sw.alphas[i]),
                    f5(sw.betas[j])
                );
            }
            None => {
                let _ = writeln!(s, "no cell solved");
            }
        }
        let failed = sw.cells.iter().filter(|c| c.breakdown.is_none()).count();
        if failed > 0 {
            let _ = writeln!(s, "failed cells: {failed}");
        }
        let covered = sw
            .alphas
            .iter()
            .flat_map(|&a| sw.betas.iter().map(move |&b| (a, b)))
            .any(|(a, b)| reference.sweep_cost(a, b).is_some());
        if covered {
            let _ = writeln!(s, "\n{label}, same grid points:");
            s.push_str(&sweep_table_text(sw, |i, j| {
                reference.sweep_cost(sw.alphas[i], sw.betas[j])
            }));
        }
    }
    s
}

fn sweep_table_text(sw: &SweepResult, value: impl Fn(usize, usize) -> Option<f64>) -> String {
    let mut s = format!("{:>8}", "a\\b");
    for b in &sw.betas {
        let _ = write!(s, " {:>10}", format!("{b:.2}"));
    }
    s.push('\n');
    for (i, a) in sw.alphas.iter().enumerate() {
        let _ = write!(s, "{:>8}", format!("{a:.2}"));
        for j in 0..sw.betas.len() {
            let cell = value(i, j).map_or("-".to_string(), f5);
            let _ = write!(s, " {cell:>10}");
        }
        s.push('\n');
    }
    s
}
