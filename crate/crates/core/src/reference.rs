//! Published results for the 33-bus study, shipped for side-by-side
//! comparison in reports. They were produced from hourly profiles that are
//! not available, so nothing here is asserted against computed values.

use serde::{Deserialize, Serialize};

const REFERENCE_TOML: &str = include_str!("../data/reference_values.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub label: String,
    pub sweep: ReferenceSweep,
    pub base_case: ReferenceBaseCase,
    pub scenario: Vec<ReferenceScenario>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSweep {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Rows follow `alphas`, columns follow `betas`.
    pub cost: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBaseCase {
    pub p_loss_kw: f64,
    pub q_loss_kvar: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScenario {
    pub name: String,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    pub p_loss_kw: f64,
    pub avg_v_dev_pct: f64,
    pub cost: f64,
}

impl ReferenceValues {
    pub fn bundled() -> Self {
        toml::from_str(REFERENCE_TOML).expect("bundled reference values parse")
    }

    pub fn scenario(&self, name: &str) -> Option<&ReferenceScenario> {
        self.scenario.iter().find(|s| s.name == name)
    }

    /// Published sweep cost at the grid point nearest to `(alpha, beta)`,
    /// if both lie on the published grid.
    pub fn sweep_cost(&self, alpha: f64, beta: f64) -> Option<f64> {
        let find = |xs: &[f64], v: f64| xs.iter().position(|&x| (x - v).abs() < 1e-9);
        let i = find(&self.sweep.alphas, alpha)?;
        let j = find(&self.sweep.betas, beta)?;
        Some(self.sweep.cost[i][j])
    }
}
