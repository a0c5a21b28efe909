//! Run configuration read from TOML. Unknown keys anywhere are rejected.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;
use supercrit_core::shooting::SolverConfig;
use supercrit_core::{GrowthModel, ModelSpec};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Command parameters; command-line flags take precedence.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// `"g"` (log-uniform in `g(mu)`) or `"mu"` (uniform).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmax: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub against_singular: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    G,
    Mu,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

/// Marks errors caused by invalid input rather than numerics.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| InputError(format!("invalid config {}: {e}", path.display())).into())
    }

    pub fn model(&self) -> Result<GrowthModel> {
        let spec = self
            .model
            .as_ref()
            .ok_or_else(|| InputError("config has no [model] block".into()))?;
        Ok(GrowthModel::from_spec(spec)?)
    }
}
