use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use feeder_dispatch::battery::DispatchSchedule;
use feeder_dispatch::config::{RunConfig, BUNDLED_NETWORK};
use feeder_dispatch::load_flow::{solve, BusInjection};
use feeder_dispatch::objective::{hour_injection, DayInputs};
use feeder_dispatch::profiles::{MixConfig, HOURS};
use feeder_dispatch::report::{emit_reports, LoadFlowReport, RunResults};
use feeder_dispatch::scenario::{
    run_all_scenarios, run_scenario, sweep_alpha_beta, ScenarioName, ScenarioSpec,
};
use feeder_dispatch::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "feeder-dispatch",
    version,
    about = "Radial feeder load flow and battery dispatch"
)]
struct Cli {
    /// TOML run configuration; defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Optimizer seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `ieee33` or a directory with buses.csv, lines.csv and optionally sectors.csv.
    #[arg(long, global = true)]
    network: Option<String>,
    #[arg(long, global = true)]
    base_kv: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a single hour and print the solution as JSON.
    Loadflow {
        /// `nominal` for the spot loads, or an hour 0-23 of the daily profiles.
        #[arg(long, default_value = "nominal")]
        hour_load: String,
    },
    /// Run one scenario, or all four with `--name all`.
    Scenario {
        #[arg(long)]
        name: Option<String>,
        #[command(flatten)]
        mix: MixArgs,
        #[command(flatten)]
        swarm: SwarmArgs,
    },
    /// Optimize the proposed scenario over an alpha/beta grid.
    Sweep {
        /// Comma-separated alpha values.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        /// Comma-separated beta values.
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        #[command(flatten)]
        swarm: SwarmArgs,
    },
    /// Optimize the battery schedule of the proposed scenario.
    Optimize {
        #[command(flatten)]
        mix: MixArgs,
        #[command(flatten)]
        swarm: SwarmArgs,
    },
    /// Check the configuration and datasets without running anything.
    Validate,
}

#[derive(Debug, Args)]
struct MixArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Debug, Args)]
struct SwarmArgs {
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Print per-iteration progress to stderr.
    #[arg(long)]
    progress: bool,
}

impl MixArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(a) = self.alpha {
            cfg.scenario.alpha = a;
        }
        if let Some(b) = self.beta {
            cfg.scenario.beta = b;
        }
    }
}

impl SwarmArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = self.particles {
            cfg.swarm.particles = p;
        }
        if let Some(i) = self.iterations {
            cfg.swarm.iterations = i;
        }
        if self.progress {
            cfg.swarm.progress = true;
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(n) = &cli.network {
        cfg.network.dataset = n.clone();
        if n != BUNDLED_NETWORK {
            cfg.network.buses = None;
            cfg.network.lines = None;
            cfg.network.sectors = None;
        }
    }
    if let Some(kv) = cli.base_kv {
        cfg.network.base_kv = kv;
    }
    match &cli.command {
        Command::Scenario { name, mix, swarm } => {
            if let Some(n) = name.as_deref().filter(|n| *n != "all") {
                cfg.scenario.name = n.parse()?;
            }
            mix.apply(&mut cfg);
            swarm.apply(&mut cfg);
        }
        Command::Optimize { mix, swarm } => {
            cfg.scenario.name = ScenarioName::Proposed;
            mix.apply(&mut cfg);
            swarm.apply(&mut cfg);
        }
        Command::Sweep {
            alphas,
            betas,
            swarm,
        } => {
            if let Some(a) = alphas {
                cfg.sweep.alphas = a.clone();
            }
            if let Some(b) = betas {
                cfg.sweep.betas = b.clone();
            }
            swarm.apply(&mut cfg);
        }
        Command::Loadflow { .. } | Command::Validate => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    let mut results = RunResults::default();
    let mut stdout = String::new();

    match &cli.command {
        Command::Validate => {
            cfg.build_study()?;
            print_stdout("OK");
            return Ok(());
        }
        Command::Loadflow { hour_load } => {
            let net = cfg.build_network()?;
            let inj = if hour_load == "nominal" {
                BusInjection::nominal(&net)
            } else {
                let hour: usize =
                    hour_load
                        .parse()
                        .ok()
                        .filter(|h| *h < HOURS)
                        .ok_or_else(|| {
                            Error::Config(format!(
                                "--hour-load must be `nominal` or 0-23, got {hour_load:?}"
                            ))
                        })?;
                let sectors = cfg.build_sectors(&net)?;
                let profiles = cfg.build_profiles(&net)?;
                profiles.validate_for(&net)?;
                let mix = MixConfig::uniform(&net, cfg.scenario.alpha)?;
                let zero = DispatchSchedule::zeros(sectors.sector_count() as usize);
                let inputs = DayInputs {
                    net: &net,
                    sectors: &sectors,
                    profiles: &profiles,
                    mix: &mix,
                    battery: &cfg.battery,
                    solver: cfg.solver,
                };
                hour_injection(&inputs, cfg.scenario.name.flags(), &zero, hour)
            };
            let sol = solve(&net, &inj, &cfg.solver)?;
            if !sol.converged {
                eprintln!(
                    "warning: load flow did not converge in {} iterations",
                    sol.iterations
                );
            }
            let load = if hour_load == "nominal" {
                "nominal".to_string()
            } else {
                format!("hour {hour_load}")
            };
            let report = LoadFlowReport::new(&net, &sol, &load, cfg.scenario.voltage_band);
            stdout = serde_json::to_string_pretty(&report)?;
            results.loadflow = Some(report);
            results.bus_ids = net.buses.iter().map(|b| b.id).collect();
        }
        Command::Scenario { name, .. } => {
            let study = cfg.build_study()?;
            results.scenarios = if name.as_deref() == Some("all") {
                run_all_scenarios(&study, cfg.scenario.alpha, cfg.scenario.beta)?
            } else {
                vec![run_scenario(&study, &cfg.scenario.spec())?]
            };
            results.bus_ids = study.net.buses.iter().map(|b| b.id).collect();
        }
        Command::Optimize { .. } => {
            let study = cfg.build_study()?;
            let spec = ScenarioSpec {
                name: ScenarioName::Proposed,
                ..cfg.scenario.spec()
            };
            results.scenarios = vec![run_scenario(&study, &spec)?];
            results.bus_ids = study.net.buses.iter().map(|b| b.id).collect();
        }
        Command::Sweep { .. } => {
            let study = cfg.build_study()?;
            results.sweep = Some(sweep_alpha_beta(
                &study,
                &cfg.sweep.alphas,
                &cfg.sweep.betas,
            )?);
        }
    }

    results.slack_bus = feeder_dispatch::network::SLACK_BUS;
    results.config = Some(cfg.clone());
    let manifest = emit_reports(&results, &cfg.out)?;
    for p in manifest {
        eprintln!("wrote {}", p.display());
    }
    if !stdout.is_empty() {
        print_stdout(&stdout);
    }
    Ok(())
}

fn print_stdout(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}
