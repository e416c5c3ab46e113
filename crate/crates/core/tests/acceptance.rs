//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! lines appear in `cargo test` output; exits non-zero if any asserted
//! criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use feeder_dispatch::battery::{simulate_schedule, BatteryParams, DispatchSchedule};
use feeder_dispatch::config::RunConfig;
use feeder_dispatch::load_flow::{solve, BusInjection, SolverOptions};
use feeder_dispatch::network::{default_sector_map, Bus, Line, RadialNetwork, SectorMap};
use feeder_dispatch::objective::{evaluate_day, CostScale, DayInputs, ObjectiveWeights};
use feeder_dispatch::profiles::{
    synthesize, HourlyProfileSet, LoadFlags, MixConfig, SynthParams, HOURS,
};
use feeder_dispatch::reference::ReferenceValues;
use feeder_dispatch::scenario::{
    all_voltages, run_all_scenarios, run_scenario_seeded, sweep_alpha_beta, ScenarioName,
    ScenarioOutcome, ScenarioSpec, Study,
};
use feeder_dispatch::swarm::{optimize, FnFitness, SearchSpace, SwarmConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = (u32, &'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let checks: Vec<Check> = vec![
        (1, "base-case losses", c1_base_case),
        (2, "closed-form oracles", c2_closed_form),
        (3, "power conservation", c3_conservation),
        (4, "battery bookkeeping", c4_battery),
        (5, "swarm sanity", c5_swarm),
        (6, "small-instance optimality", c6_small_instance),
        (7, "never do harm", c7_never_do_harm),
        (8, "voltage band on feasible runs", c8_voltage_band),
        (10, "reproducibility", c10_reproducibility),
    ];
    let mut failed = 0;
    for (n, name, f) in checks {
        let t = Instant::now();
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {}  {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if n == 8 {
            println!(
                "criterion  9 REPORT  published table values (not asserted): {}",
                c9_report()
            );
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all asserted criteria passed");
}

// --- independent reference solver -------------------------------------

/// Fixed-point solve of `V = V0 - Z I(V)` with the dense path-impedance
/// matrix of the tree. Shares no code with the sweep solver.
fn path_matrix_solve(net: &RadialNetwork, inj: &BusInjection) -> (Vec<Complex64>, f64, f64) {
    let n = net.buses.len();
    let idx: BTreeMap<u32, usize> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id, i))
        .collect();
    let slack = idx[&1];
    let z_base = net.base_kv * net.base_kv / net.base_mva;
    let s_base = net.base_mva * 1000.0;

    // Lines on the path from the slack to each bus.
    let mut adj: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    for l in &net.lines {
        let (a, b) = (idx[&l.from_bus], idx[&l.to_bus]);
        let z = Complex64::new(l.r_ohm, l.x_ohm) / z_base;
        adj[a].push((b, z));
        adj[b].push((a, z));
    }
    let mut path: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    let mut seen = vec![false; n];
    let mut stack = vec![slack];
    seen[slack] = true;
    while let Some(u) = stack.pop() {
        for &(v, z) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                let mut p = path[u].clone();
                p.push((v, z));
                path[v] = p;
                stack.push(v);
            }
        }
    }
    let mut zm = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for i in 0..n {
        for j in 0..n {
            zm[i][j] = path[i]
                .iter()
                .filter(|(e, _)| path[j].iter().any(|(f, _)| f == e))
                .map(|(_, z)| z)
                .sum();
        }
    }

    let s: Vec<Complex64> = (0..n)
        .map(|i| {
            if i == slack {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(inj.p_kw[i], inj.q_kvar[i]) / s_base
            }
        })
        .collect();
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    for _ in 0..10_000 {
        let i_load: Vec<Complex64> = (0..n).map(|k| (s[k] / v[k]).conj()).collect();
        let mut dv = 0.0f64;
        let mut next = v.clone();
        for k in 0..n {
            let drop: Complex64 = (0..n).map(|m| zm[k][m] * i_load[m]).sum();
            next[k] = Complex64::new(1.0, 0.0) - drop;
            dv = dv.max((next[k] - v[k]).norm());
        }
        v = next;
        if dv < 1e-14 {
            break;
        }
    }
    let i_total: Complex64 = (0..n).map(|k| (s[k] / v[k]).conj()).sum();
    let s_slack = i_total.conj();
    let s_load: Complex64 = s.iter().sum();
    let loss = (s_slack - s_load) * s_base;
    (v, loss.re, loss.im)
}

// --- criteria ----------------------------------------------------------

fn c1_base_case() -> Outcome {
    let reference = ReferenceValues::bundled().base_case;
    let net = RadialNetwork::ieee33();
    let inj = BusInjection::nominal(&net);
    let t = Instant::now();
    let sol = solve(&net, &inj, &SolverOptions::default()).unwrap();
    let elapsed = t.elapsed();
    let dp = (sol.p_loss_kw - reference.p_loss_kw) / reference.p_loss_kw;
    let dq = (sol.q_loss_kvar - reference.q_loss_kvar) / reference.q_loss_kvar;
    let at_11 = dp.abs() <= 0.02 && dq.abs() <= 0.02;

    let canon = RadialNetwork::ieee33_with_base(12.66, 1.0).unwrap();
    let sol_c = solve(
        &canon,
        &BusInjection::nominal(&canon),
        &SolverOptions::default(),
    )
    .unwrap();
    let (v_ref, p_ref, q_ref) = path_matrix_solve(&canon, &BusInjection::nominal(&canon));
    let v_err = sol_c
        .v_pu
        .iter()
        .zip(&v_ref)
        .map(|(a, b)| (a - b.norm()).abs())
        .fold(0.0, f64::max);
    let canon_ok = (sol_c.p_loss_kw - p_ref).abs() < 1e-6 * p_ref
        && (sol_c.q_loss_kvar - q_ref).abs() < 1e-6 * q_ref
        && v_err < 1e-8;

    outcome(
        at_11 && canon_ok && elapsed < Duration::from_secs(1),
        format!(
            "11 kV {:.2} kW / {:.2} kVAR vs {} / {} ({:+.2}% / {:+.2}%, reproduces at 11 kV: {at_11}); \
             12.66 kV {:.2} kW / {:.2} kVAR vs path-matrix oracle {:.2} / {:.2}, max |dV| {v_err:.1e}; \
             solve {:.2} ms",
            sol.p_loss_kw,
            sol.q_loss_kvar,
            reference.p_loss_kw,
            reference.q_loss_kvar,
            dp * 100.0,
            dq * 100.0,
            sol_c.p_loss_kw,
            sol_c.q_loss_kvar,
            p_ref,
            q_ref,
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

fn bus(id: u32, p: f64, q: f64) -> Bus {
    Bus {
        id,
        p_load_kw: p,
        q_load_kvar: q,
        n_residences: 10,
    }
}

fn line(from: u32, to: u32, r: f64, x: f64) -> Line {
    Line {
        from_bus: from,
        to_bus: to,
        r_ohm: r,
        x_ohm: x,
        ampacity_a: 400.0,
    }
}

/// Receiving-end magnitude of one load behind one series impedance, all
/// in per-unit with a 1.0 p.u. source.
fn quadratic_v(r: f64, x: f64, p: f64, q: f64) -> f64 {
    let b = 1.0 - 2.0 * (r * p + x * q);
    let c = (r * r + x * x) * (p * p + q * q);
    ((b + (b * b - 4.0 * c).sqrt()) / 2.0).sqrt()
}

fn c2_closed_form() -> Outcome {
    let opts = SolverOptions::default();
    let zb = 121.0;
    let mut worst = 0.0f64;
    let mut cases = 0;
    let check = |got: f64, want: f64, worst: &mut f64| *worst = worst.max((got - want).abs());

    for &(r, x, p, q) in &[
        (1.0, 0.0, 1000.0, 0.0),
        (2.5, 0.0, 2000.0, 0.0),
        (0.5, 0.0, 300.0, 0.0),
        (1.0, 0.8, 1200.0, 600.0),
        (3.0, 1.5, 800.0, 500.0),
    ] {
        let net = RadialNetwork::new(
            vec![bus(1, 0.0, 0.0), bus(2, p, q)],
            vec![line(1, 2, r, x)],
            11.0,
            1.0,
        )
        .unwrap();
        let sol = solve(&net, &BusInjection::nominal(&net), &opts).unwrap();
        check(
            sol.v_pu[1],
            quadratic_v(r / zb, x / zb, p / 1000.0, q / 1000.0),
            &mut worst,
        );
        cases += 1;
    }

    // Star: two independent branches from the slack.
    let net = RadialNetwork::new(
        vec![bus(1, 0.0, 0.0), bus(2, 900.0, 0.0), bus(3, 1500.0, 0.0)],
        vec![line(1, 2, 1.2, 0.0), line(1, 3, 0.7, 0.0)],
        11.0,
        1.0,
    )
    .unwrap();
    let sol = solve(&net, &BusInjection::nominal(&net), &opts).unwrap();
    check(
        sol.v_pu[1],
        quadratic_v(1.2 / zb, 0.0, 0.9, 0.0),
        &mut worst,
    );
    check(
        sol.v_pu[2],
        quadratic_v(0.7 / zb, 0.0, 1.5, 0.0),
        &mut worst,
    );
    cases += 2;

    // Chain with the load at the far end: the two lines act in series, and
    // the middle bus sits on the voltage divider between them.
    let (r1, r2, p) = (0.8, 1.4, 1100.0);
    let net = RadialNetwork::new(
        vec![bus(1, 0.0, 0.0), bus(2, 0.0, 0.0), bus(3, p, 0.0)],
        vec![line(1, 2, r1, 0.0), line(2, 3, r2, 0.0)],
        11.0,
        1.0,
    )
    .unwrap();
    let sol = solve(&net, &BusInjection::nominal(&net), &opts).unwrap();
    let v3 = quadratic_v((r1 + r2) / zb, 0.0, p / 1000.0, 0.0);
    let i = (p / 1000.0) / v3;
    check(sol.v_pu[2], v3, &mut worst);
    check(sol.v_pu[1], 1.0 - r1 / zb * i, &mut worst);
    cases += 2;

    outcome(
        worst <= 1e-8,
        format!("{cases} bus voltages, max error {worst:.2e} p.u. (limit 1e-8)"),
    )
}

fn c3_conservation() -> Outcome {
    let net = RadialNetwork::ieee33();
    let base_kw = net.base_mva * 1000.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut unconverged = 0;
    for _ in 0..100 {
        let mut inj = BusInjection::nominal(&net);
        for i in 0..net.buses.len() {
            let k: f64 = rng.gen_range(-0.5..1.6);
            inj.p_kw[i] *= k;
            inj.q_kvar[i] *= rng.gen_range(-0.5..1.6);
        }
        let sol = solve(&net, &inj, &SolverOptions::default()).unwrap();
        if !sol.converged {
            unconverged += 1;
        }
        let slack = net.slack_index();
        let load_p: f64 = (0..net.buses.len())
            .filter(|&i| i != slack)
            .map(|i| inj.p_kw[i])
            .sum();
        let load_q: f64 = (0..net.buses.len())
            .filter(|&i| i != slack)
            .map(|i| inj.q_kvar[i])
            .sum();
        worst = worst
            .max((sol.p_slack_kw - load_p - sol.p_loss_kw).abs())
            .max((sol.q_slack_kvar - load_q - sol.q_loss_kvar).abs());
    }
    let limit = 1e-6 * base_kw;
    outcome(
        worst <= limit && unconverged == 0,
        format!("100 random injections, max imbalance {worst:.2e} kW (limit {limit:.0e}), unconverged {unconverged}"),
    )
}

fn c4_battery() -> Outcome {
    let net = RadialNetwork::ieee33();
    let sectors = default_sector_map(&net, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_tele = 0.0f64;
    let mut soc_ok = true;
    let mut iff_ok = true;
    let mut with_penalty = 0;
    for _ in 0..1000 {
        let alpha = rng.gen_range(0.0..1.0);
        let params = BatteryParams {
            beta: rng.gen_range(0.0..1.0),
            soc_init_pct: rng.gen_range(0.0..100.0),
            ..BatteryParams::default()
        };
        let mix = MixConfig::uniform(&net, alpha).unwrap();
        // Half the schedules stay small enough to be penalty-free.
        let amp = if rng.gen_bool(0.5) { 0.02 } else { 2.0 };
        let mut sched = DispatchSchedule::zeros(7);
        for row in sched.p_bt.iter_mut() {
            for p in row.iter_mut() {
                *p = rng.gen_range(-amp..amp);
            }
        }
        let trace = simulate_schedule(&net, &sectors, &mix, &params, &sched).unwrap();

        let mut crossed = false;
        for b in &trace.buses {
            if b.soc_pct.iter().any(|s| !(0.0..=100.0).contains(s)) {
                soc_ok = false;
            }
            // Independent replay of the clamp rule.
            let mut e = b.energy_kwh[0];
            for h in 0..HOURS {
                let next = e + sched.command(b.sector, h);
                if next < -1e-9 || next > b.e_max_kwh + 1e-9 {
                    crossed = true;
                }
                e = next.clamp(0.0, b.e_max_kwh);
            }
        }
        if crossed != (trace.penalty_kwh > 0.0) {
            iff_ok = false;
        }
        if trace.penalty_kwh == 0.0 {
            for b in &trace.buses {
                let sum: f64 = (0..HOURS).map(|h| sched.command(b.sector, h)).sum();
                worst_tele = worst_tele.max((b.energy_kwh[HOURS] - b.energy_kwh[0] - sum).abs());
            }
        } else {
            with_penalty += 1;
        }
    }
    outcome(
        worst_tele <= 1e-9 && soc_ok && iff_ok && with_penalty > 0 && with_penalty < 1000,
        format!(
            "1000 schedules ({with_penalty} with penalty), telescoping max error {worst_tele:.1e} kWh, \
             SOC in [0,100]: {soc_ok}, penalty iff bound crossed: {iff_ok}"
        ),
    )
}

fn c5_swarm() -> Outcome {
    let cfg = SwarmConfig::default();
    let sphere = FnFitness::new(10, |x: &[f64]| x.iter().map(|v| v * v).sum());
    let space = SearchSpace::uniform(10, -5.12, 5.12).unwrap();
    let a = optimize(&sphere, &space, &cfg).unwrap();
    let b = optimize(&sphere, &space, &cfg).unwrap();
    let identical = a
        .best_position
        .iter()
        .map(|v| v.to_bits())
        .eq(b.best_position.iter().map(|v| v.to_bits()))
        && a.history
            .iter()
            .map(|v| v.to_bits())
            .eq(b.history.iter().map(|v| v.to_bits()));

    let rosen = FnFitness::new(4, |x: &[f64]| {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    });
    let r_space = SearchSpace::uniform(4, -2.0, 2.0).unwrap();
    let mut monotone = true;
    for seed in 0..5 {
        let c = SwarmConfig {
            seed,
            ..cfg.clone()
        };
        for r in [
            optimize(&sphere, &space, &c).unwrap(),
            optimize(&rosen, &r_space, &c).unwrap(),
        ] {
            monotone &= r.history.windows(2).all(|w| w[1] <= w[0]);
        }
    }
    outcome(
        a.best_cost < 1e-6 && identical && monotone,
        format!(
            "sphere D=10 best {:.2e} (limit 1e-6), fixed-seed runs bit-identical: {identical}, \
             history non-increasing over 10 runs: {monotone}",
            a.best_cost
        ),
    )
}

fn c6_small_instance() -> Outcome {
    let net = RadialNetwork::new(
        vec![bus(1, 0.0, 0.0), bus(2, 60.0, 20.0), bus(3, 120.0, 40.0)],
        vec![line(1, 2, 3.0, 1.5), line(2, 3, 4.0, 2.0)],
        11.0,
        1.0,
    )
    .unwrap();
    let sectors = SectorMap::new(&net, BTreeMap::from([(2, 1), (3, 1)])).unwrap();
    let mut profiles = HourlyProfileSet::zeros(&net);
    for (id, p0, p1) in [(2, 300.0, 180.0), (3, 500.0, 420.0)] {
        let r = profiles.p_res.get_mut(&id).unwrap();
        r[0] = p0;
        r[1] = p1;
        let q = profiles.q_res.get_mut(&id).unwrap();
        q[0] = p0 * 0.4;
        q[1] = p1 * 0.4;
    }
    let mix = MixConfig::uniform(&net, 0.0).unwrap();
    // 10 homes, half dispatchable: 50 kWh and 25 kW per bus, starting at 50%.
    let battery = BatteryParams {
        beta: 0.5,
        ..BatteryParams::default()
    };
    let inputs = DayInputs {
        net: &net,
        sectors: &sectors,
        profiles: &profiles,
        mix: &mix,
        battery: &battery,
        solver: SolverOptions::default(),
    };
    let weights = ObjectiveWeights::default();
    let scale = CostScale::calibrate(&inputs, &weights).unwrap();
    let cap = battery.power_cap_kw(10);
    let cost = |x: &[f64]| {
        let mut s = DispatchSchedule::zeros(1);
        s.p_bt[0][0] = x[0];
        s.p_bt[0][1] = x[1];
        evaluate_day(&inputs, LoadFlags::ALL, &s, &weights, &scale)
            .unwrap()
            .cost
    };

    let t = Instant::now();
    let mut grid_best = f64::INFINITY;
    for i in 0..=10 {
        for j in 0..=10 {
            let x = [
                -cap + 2.0 * cap * i as f64 / 10.0,
                -cap + 2.0 * cap * j as f64 / 10.0,
            ];
            grid_best = grid_best.min(cost(&x));
        }
    }
    let space = SearchSpace::uniform(2, -cap, cap).unwrap();
    let res = optimize(&FnFitness::new(2, cost), &space, &SwarmConfig::default()).unwrap();
    let elapsed = t.elapsed();
    let gap = (res.best_cost - grid_best) / grid_best;
    outcome(
        gap <= 0.02 && elapsed < Duration::from_secs(10),
        format!(
            "swarm {:.6} vs best of 121 grid points {grid_best:.6} ({:+.3}%), x = [{:.2}, {:.2}] kW",
            res.best_cost,
            gap * 100.0,
            res.best_position[0],
            res.best_position[1]
        ),
    )
}

fn desk_study() -> Study {
    let mut cfg = RunConfig::default();
    cfg.swarm.particles = 20;
    cfg.swarm.iterations = 50;
    cfg.build_study().unwrap()
}

fn median3(mut v: [f64; 3]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[1]
}

const DESK_ALPHAS: [f64; 3] = [0.0, 0.5, 0.7];
const DESK_BETAS: [f64; 3] = [0.0, 0.15, 0.3];
const DESK_SEEDS: [u64; 3] = [1, 2, 3];

fn desk_runs() -> &'static [ScenarioOutcome] {
    static RUNS: OnceLock<Vec<ScenarioOutcome>> = OnceLock::new();
    RUNS.get_or_init(compute_desk_runs)
}

fn compute_desk_runs() -> Vec<ScenarioOutcome> {
    let study = desk_study();
    let mut out = Vec::new();
    for &alpha in &DESK_ALPHAS {
        for &beta in &DESK_BETAS {
            for &seed in &DESK_SEEDS {
                let spec = ScenarioSpec {
                    name: ScenarioName::Proposed,
                    alpha,
                    beta,
                };
                out.push(run_scenario_seeded(&study, &spec, seed).unwrap());
            }
        }
    }
    out
}

fn c7_never_do_harm() -> Outcome {
    let t = Instant::now();
    let study = desk_study();
    let runs = desk_runs();
    let mut harm = 0;
    let mut trend = Vec::new();
    let mut trend_ok = true;
    for &alpha in &DESK_ALPHAS {
        let spec = ScenarioSpec {
            name: ScenarioName::GridEvNbbsr,
            alpha,
            beta: 0.0,
        };
        let zero = run_scenario_seeded(&study, &spec, 0)
            .unwrap()
            .breakdown
            .cost;
        let at = |beta: f64| {
            let v: Vec<f64> = runs
                .iter()
                .filter(|r| r.spec.alpha == alpha && r.spec.beta == beta)
                .map(|r| r.breakdown.cost)
                .collect();
            median3([v[0], v[1], v[2]])
        };
        harm += runs
            .iter()
            .filter(|r| r.spec.alpha == alpha && r.breakdown.cost > zero)
            .count();
        let (m0, m3) = (at(0.0), at(0.3));
        trend_ok &= m3 <= m0;
        trend.push(format!("a={alpha}: {m0:.4} -> {m3:.4}"));
    }
    let elapsed = t.elapsed();
    outcome(
        harm == 0 && trend_ok && elapsed < Duration::from_secs(600),
        format!(
            "{} runs at 20x50, worse than zero schedule: {harm}; median cost beta 0 -> 0.3: {}",
            runs.len(),
            trend.join(", ")
        ),
    )
}

fn c8_voltage_band() -> Outcome {
    let mut checked = 0;
    let mut bad = 0;
    let mut consistent = true;
    let mut check = |study: &Study, runs: &[ScenarioOutcome]| {
        for r in runs {
            let v = all_voltages(r, &study.net);
            let in_band = v
                .iter()
                .all(|&(_, _, x)| (x - 1.0).abs() <= study.voltage_band);
            if r.feasible {
                checked += 1;
                if !in_band || v.len() != HOURS * (study.net.buses.len() - 1) {
                    bad += 1;
                }
            } else if in_band
                && r.breakdown.failed_hours == 0
                && r.ampacity_violations == 0
                && r.breakdown.battery_overshoot_kwh == 0.0
            {
                consistent = false;
            }
        }
    };

    let desk = desk_study();
    check(&desk, desk_runs());

    // A lightly loaded feeder where the band can actually hold.
    let base = RadialNetwork::ieee33();
    let buses = base
        .buses
        .iter()
        .map(|b| Bus {
            p_load_kw: b.p_load_kw * 0.4,
            q_load_kvar: b.q_load_kvar * 0.4,
            ..b.clone()
        })
        .collect();
    let net = RadialNetwork::new(buses, base.lines.clone(), base.base_kv, base.base_mva).unwrap();
    let sectors = default_sector_map(&net, 7).unwrap();
    let profiles = synthesize(&net, &SynthParams::default()).unwrap();
    let swarm = SwarmConfig {
        particles: 20,
        iterations: 50,
        ..SwarmConfig::default()
    };
    let light = Study::new(
        net,
        sectors,
        profiles,
        BatteryParams::default(),
        ObjectiveWeights::default(),
        SolverOptions::default(),
        swarm,
    )
    .unwrap();
    let mut light_runs = Vec::new();
    for &alpha in &[0.3, 0.7] {
        light_runs.extend(run_all_scenarios(&light, alpha, 0.3).unwrap());
    }
    check(&light, &light_runs);

    outcome(
        checked > 0 && bad == 0 && consistent,
        format!(
            "{checked} runs claim feasibility, {bad} of them leave the band; \
             infeasible flags all have a cause: {consistent}"
        ),
    )
}

fn c9_report() -> String {
    let reference = ReferenceValues::bundled();
    let study = desk_study();
    let runs = run_all_scenarios(&study, 0.7, 0.3).unwrap();
    let mut parts = Vec::new();
    for r in &runs {
        if let Some(p) = reference.scenario(r.spec.name.as_str()) {
            parts.push(format!(
                "{} computed {:.1} kW / {:.2}% / {:.5} vs {} {:.1} / {:.2} / {:.5}",
                r.spec.name,
                r.breakdown.p_loss_total_kw,
                r.breakdown.avg_v_dev_pct,
                r.breakdown.cost,
                reference.label,
                p.p_loss_kw,
                p.avg_v_dev_pct,
                p.cost
            ));
        }
    }
    let sweep = sweep_alpha_beta(&study, &[0.7], &[0.3]).unwrap();
    parts.push(format!(
        "sweep cell (0.7, 0.3) computed {:.5} vs {} {:.5}",
        sweep.cost(0, 0).unwrap_or(f64::NAN),
        reference.label,
        reference.sweep_cost(0.7, 0.3).unwrap()
    ));
    parts.join("; ")
}

fn run_cli(dir: &Path, args: &[&str]) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_feeder-dispatch"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    if let Ok(entries) = std::fs::read_dir(dir) {
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().into_owned();
            files.insert(name, std::fs::read(e.path()).unwrap());
        }
    }
    files
}

fn c10_reproducibility() -> Outcome {
    let commands: [&[&str]; 6] = [
        &["loadflow", "--hour-load", "nominal"],
        &["loadflow", "--hour-load", "18"],
        &[
            "scenario",
            "--name",
            "all",
            "--particles",
            "10",
            "--iterations",
            "20",
        ],
        &[
            "optimize",
            "--particles",
            "10",
            "--iterations",
            "20",
            "--seed",
            "5",
        ],
        &[
            "sweep",
            "--alphas",
            "0,0.7",
            "--betas",
            "0,0.3",
            "--particles",
            "10",
            "--iterations",
            "20",
        ],
        &["validate"],
    ];
    let mut mismatched = Vec::new();
    let mut files = 0;
    for args in commands {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut full = args.to_vec();
        full.extend(["--out", "out"]);
        let (ca, sa) = run_cli(a.path(), &full);
        let (cb, sb) = run_cli(b.path(), &full);
        let (ta, tb) = (
            read_tree(&a.path().join("out")),
            read_tree(&b.path().join("out")),
        );
        files += ta.len();
        if ca != 0 || cb != 0 || sa != sb || ta != tb {
            mismatched.push(args[0]);
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("6 commands run twice, {files} data files compared byte for byte, mismatches: {mismatched:?}"),
    )
}
