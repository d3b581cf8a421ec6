//! Scenario files (JSON).
//!
//! Only `components` and `budget` are required. Everything else takes the
//! documented defaults, and a component without `k`/`lambda` inherits
//! `dynamics.k_mean`/`dynamics.lambda_mean`. Serialization writes every field
//! explicitly, which makes the output a fixpoint of parse-then-serialize.

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::dynamics::DynamicsConfig;
use crate::economics::BudgetModel;
use crate::error::{Error, Result};
use crate::model::{ComponentSpec, Hierarchy, Metadata, Step, Window};
use crate::sim::{RewardConfig, ScenarioConfig, Termination, SCENARIO_FORMAT_VERSION};

fn default_version() -> u32 {
    SCENARIO_FORMAT_VERSION
}

fn default_horizon() -> Step {
    100
}

fn default_alpha() -> f64 {
    1.0
}

fn default_importance() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComponent {
    id: u64,
    #[serde(default)]
    type_id: u32,
    k: Option<f64>,
    lambda: Option<f64>,
    delta: f64,
    c_m: f64,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default)]
    beta: f64,
    #[serde(default)]
    c_inspect: f64,
    #[serde(default = "default_importance")]
    importance: f64,
    #[serde(default)]
    availability_windows: Vec<Window>,
    #[serde(default)]
    catastrophic_hazard: f64,
    #[serde(default)]
    metadata: Metadata,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default = "default_version")]
    format_version: u32,
    #[serde(default)]
    name: String,
    components: Vec<RawComponent>,
    #[serde(default)]
    dynamics: DynamicsConfig,
    budget: BudgetModel,
    #[serde(default = "default_horizon")]
    horizon: Step,
    #[serde(default)]
    reward: RewardConfig,
    #[serde(default)]
    termination: Termination,
    #[serde(default)]
    master_seed: u64,
    #[serde(default)]
    hierarchy: Option<Hierarchy>,
    #[serde(default)]
    metadata: Metadata,
}

impl RawScenario {
    fn into_config(self) -> ScenarioConfig {
        let dynamics = self.dynamics;
        let components = self
            .components
            .into_iter()
            .map(|c| ComponentSpec {
                id: c.id,
                type_id: c.type_id,
                k: c.k.unwrap_or(dynamics.k_mean),
                lambda: c.lambda.unwrap_or(dynamics.lambda_mean),
                delta: c.delta,
                c_m: c.c_m,
                alpha: c.alpha,
                beta: c.beta,
                c_inspect: c.c_inspect,
                importance: c.importance,
                availability_windows: c.availability_windows,
                catastrophic_hazard: c.catastrophic_hazard,
                metadata: c.metadata,
            })
            .collect();
        ScenarioConfig {
            format_version: self.format_version,
            name: self.name,
            components,
            dynamics,
            budget: self.budget,
            horizon: self.horizon,
            reward: self.reward,
            termination: self.termination,
            master_seed: self.master_seed,
            hierarchy: self.hierarchy,
            metadata: self.metadata,
        }
    }
}

/// Parses and validates a scenario file.
pub fn parse_scenario(bytes: &[u8]) -> Result<ScenarioConfig> {
    // Check the version before the schema so newer files fail clearly.
    if let Ok(value) = serde_json::from_slice::<serde_json::Value>(bytes) {
        if let Some(v) = value.get("format_version").and_then(|v| v.as_u64()) {
            if v > u64::from(SCENARIO_FORMAT_VERSION) {
                return Err(Error::UnsupportedVersion {
                    found: v as u32,
                    supported: SCENARIO_FORMAT_VERSION,
                });
            }
        }
    }
    let raw: RawScenario = serde_json::from_slice(bytes)?;
    let config = raw.into_config();
    config.validate()?;
    Ok(config)
}

pub fn read_scenario_file(path: &std::path::Path) -> Result<ScenarioConfig> {
    parse_scenario(&std::fs::read(path)?)
}

/// Canonical pretty-printed form with every default written out.
pub fn scenario_to_string(config: &ScenarioConfig) -> String {
    let mut s = serde_json::to_string_pretty(config).expect("scenario serializes");
    s.push('\n');
    s
}

/// SHA-256 over the compact canonical serialization.
pub fn fingerprint(config: &ScenarioConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("scenario serializes");
    hex::encode(Sha256::digest(&bytes))
}
