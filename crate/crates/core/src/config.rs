//! Run configuration: one TOML file with a section per component. Every
//! field has a default, so an empty file is a valid configuration.
//! Relative paths are resolved against the directory of the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::battery::BatteryParams;
use crate::error::{Error, Result};
use crate::load_flow::SolverOptions;
use crate::network::{
    default_sector_map, load_network_files, RadialNetwork, SectorMap, DEFAULT_BASE_KV,
    DEFAULT_BASE_MVA, DEFAULT_SECTOR_COUNT,
};
use crate::objective::ObjectiveWeights;
use crate::profiles::{load_profiles_csv, synthesize, HourlyProfileSet, SynthParams};
use crate::scenario::{ScenarioName, ScenarioSpec, Study};
use crate::swarm::SwarmConfig;

pub const BUNDLED_NETWORK: &str = "ieee33";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Optimizer seed; overrides `swarm.seed`.
    pub seed: u64,
    pub out: PathBuf,
    pub network: NetworkConfig,
    pub profiles: ProfileConfig,
    pub battery: BatteryParams,
    pub objective: ObjectiveWeights,
    pub solver: SolverOptions,
    pub swarm: SwarmConfig,
    pub scenario: ScenarioConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: SwarmConfig::default().seed,
            out: PathBuf::from("out"),
            network: NetworkConfig::default(),
            profiles: ProfileConfig::default(),
            battery: BatteryParams::default(),
            objective: ObjectiveWeights::default(),
            solver: SolverOptions::default(),
            swarm: SwarmConfig::default(),
            scenario: ScenarioConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// `"ieee33"` for the bundled feeder, or a directory holding
    /// `buses.csv`, `lines.csv` and optionally `sectors.csv`.
    pub dataset: String,
    /// Explicit tables; take precedence over `dataset`.
    pub buses: Option<PathBuf>,
    pub lines: Option<PathBuf>,
    pub sectors: Option<PathBuf>,
    pub base_kv: f64,
    pub base_mva: f64,
    /// Used when no sector table is given.
    pub sector_count: u32,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            dataset: BUNDLED_NETWORK.into(),
            buses: None,
            lines: None,
            sectors: None,
            base_kv: DEFAULT_BASE_KV,
            base_mva: DEFAULT_BASE_MVA,
            sector_count: DEFAULT_SECTOR_COUNT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    /// Per-bus hourly table; when set, `solar_table` must be set too and the
    /// synthesis parameters are ignored.
    pub bus_table: Option<PathBuf>,
    pub solar_table: Option<PathBuf>,
    pub synth: SynthParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: ScenarioName,
    pub alpha: f64,
    pub beta: f64,
    pub trajectory_buses: Vec<u32>,
    pub voltage_band: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: ScenarioName::Proposed,
            alpha: 0.7,
            beta: 0.3,
            trajectory_buses: vec![18, 33],
            voltage_band: 0.10,
        }
    }
}

impl ScenarioConfig {
    pub fn spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            name: self.name,
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alphas: (0..=10).map(|i| i as f64 / 10.0).collect(),
            betas: (0..=6).map(|i| (5 * i) as f64 / 100.0).collect(),
        }
    }
}

impl RunConfig {
    /// Parses TOML text; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text)?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, dir)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut self.network.buses);
        fix(&mut self.network.lines);
        fix(&mut self.network.sectors);
        fix(&mut self.profiles.bus_table);
        fix(&mut self.profiles.solar_table);
        if self.network.dataset != BUNDLED_NETWORK && Path::new(&self.network.dataset).is_relative()
        {
            self.network.dataset = base
                .join(&self.network.dataset)
                .to_string_lossy()
                .into_owned();
        }
    }

    /// Checks every numeric field and that referenced files exist, without
    /// running any load flow.
    pub fn validate(&self) -> Result<()> {
        self.battery.validate()?;
        self.objective.validate()?;
        self.solver.validate()?;
        self.swarm_config().validate()?;
        self.profiles.synth.ev.validate()?;
        self.scenario.spec().validate()?;
        let band = self.scenario.voltage_band;
        if !(band > 0.0 && band < 1.0) {
            return Err(Error::Config(format!(
                "voltage band must lie in (0, 1), got {band}"
            )));
        }
        if self.sweep.alphas.is_empty() || self.sweep.betas.is_empty() {
            return Err(Error::Config("sweep grid must not be empty".into()));
        }
        if let Some(v) = self
            .sweep
            .alphas
            .iter()
            .chain(&self.sweep.betas)
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Config(format!("sweep value {v} outside [0, 1]")));
        }
        match (&self.profiles.bus_table, &self.profiles.solar_table) {
            (Some(_), None) | (None, Some(_)) => {
                return Err(Error::Config(
                    "profile bus and solar tables must be given together".into(),
                ))
            }
            _ => {}
        }
        for p in self.referenced_files() {
            if !p.is_file() {
                return Err(Error::Config(format!("file not found: {}", p.display())));
            }
        }
        Ok(())
    }

    fn referenced_files(&self) -> Vec<PathBuf> {
        let (b, l, s) = self.network_tables();
        let mut out: Vec<PathBuf> = [b, l].into_iter().flatten().collect();
        out.extend(s);
        out.extend(self.profiles.bus_table.clone());
        out.extend(self.profiles.solar_table.clone());
        out
    }

    /// `(buses, lines, sectors)` paths, or `None` for the bundled feeder.
    fn network_tables(&self) -> (Option<PathBuf>, Option<PathBuf>, Option<PathBuf>) {
        let n = &self.network;
        if n.dataset == BUNDLED_NETWORK && n.buses.is_none() && n.lines.is_none() {
            return (None, None, n.sectors.clone());
        }
        let dir = PathBuf::from(&n.dataset);
        let buses = n.buses.clone().unwrap_or_else(|| dir.join("buses.csv"));
        let lines = n.lines.clone().unwrap_or_else(|| dir.join("lines.csv"));
        let sectors = n.sectors.clone().or_else(|| {
            let p = dir.join("sectors.csv");
            (n.dataset != BUNDLED_NETWORK && p.is_file()).then_some(p)
        });
        (Some(buses), Some(lines), sectors)
    }

    pub fn swarm_config(&self) -> SwarmConfig {
        SwarmConfig {
            seed: self.seed,
            ..self.swarm.clone()
        }
    }

    pub fn build_network(&self) -> Result<RadialNetwork> {
        match self.network_tables() {
            (Some(b), Some(l), _) => {
                load_network_files(&b, &l, self.network.base_kv, self.network.base_mva)
            }
            _ => RadialNetwork::ieee33_with_base(self.network.base_kv, self.network.base_mva),
        }
    }

    pub fn build_sectors(&self, net: &RadialNetwork) -> Result<SectorMap> {
        match self.network_tables().2 {
            Some(p) => SectorMap::from_csv_file(net, &p),
            None => default_sector_map(net, self.network.sector_count),
        }
    }

    pub fn build_profiles(&self, net: &RadialNetwork) -> Result<HourlyProfileSet> {
        match (&self.profiles.bus_table, &self.profiles.solar_table) {
            (Some(b), Some(s)) => load_profiles_csv(b, s),
            _ => synthesize(net, &self.profiles.synth),
        }
    }

    /// Validates, loads every dataset and calibrates the objective.
    pub fn build_study(&self) -> Result<Study> {
        self.validate()?;
        let net = self.build_network()?;
        let sectors = self.build_sectors(&net)?;
        let profiles = self.build_profiles(&net)?;
        let mut study = Study::new(
            net,
            sectors,
            profiles,
            self.battery.clone(),
            self.objective,
            self.solver,
            self.swarm_config(),
        )?;
        study.trajectory_buses = self.scenario.trajectory_buses.clone();
        study.voltage_band = self.scenario.voltage_band;
        Ok(study)
    }
}
