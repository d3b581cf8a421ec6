use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Normalized margin above threshold minus a per-failure penalty.
    ThresholdMargin,
    /// +1 for every step entered with no failed component.
    SurvivalTime,
    /// A named reward from [`CUSTOM_REWARDS`].
    Custom(String),
}

/// Tags accepted by [`RewardKind::Custom`].
pub const CUSTOM_REWARDS: &[&str] = &["negative_cost", "failure_count"];

fn default_penalty() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub kind: RewardKind,
    #[serde(default = "default_penalty")]
    pub failure_penalty: f64,
    /// Divisor of the margin sum; `100 * n` when unset.
    #[serde(default)]
    pub normalizer: Option<f64>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            kind: RewardKind::ThresholdMargin,
            failure_penalty: default_penalty(),
            normalizer: None,
        }
    }
}

impl RewardConfig {
    pub fn survival() -> Self {
        Self {
            kind: RewardKind::SurvivalTime,
            ..Self::default()
        }
    }

    pub fn validate(&self, path: &str) -> Result<(), ConfigError> {
        if !(self.failure_penalty.is_finite() && self.failure_penalty >= 0.0) {
            return Err(ConfigError::new(
                format!("{path}.failure_penalty"),
                "must be >= 0",
            ));
        }
        if let Some(z) = self.normalizer {
            if !(z.is_finite() && z > 0.0) {
                return Err(ConfigError::new(format!("{path}.normalizer"), "must be > 0"));
            }
        }
        if let RewardKind::Custom(tag) = &self.kind {
            if !CUSTOM_REWARDS.contains(&tag.as_str()) {
                return Err(ConfigError::new(
                    format!("{path}.kind"),
                    format!(
                        "unknown custom reward `{tag}`; known: {}",
                        CUSTOM_REWARDS.join(", ")
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// `(1 / Z) * sum(s_i - delta_i) - penalty * #{i : s_i <= delta_i}` with
/// `Z = 100 n` by default. The penalty is not scaled by `Z`.
pub fn reward_threshold_margin(cis: &[f64], deltas: &[f64], cfg: &RewardConfig) -> f64 {
    debug_assert_eq!(cis.len(), deltas.len());
    let n = cis.len();
    let normalizer = cfg.normalizer.unwrap_or(100.0 * n as f64);
    let mut margin = 0.0;
    let mut failing = 0usize;
    for (s, d) in cis.iter().zip(deltas) {
        margin += s - d;
        if s <= d {
            failing += 1;
        }
    }
    margin / normalizer - cfg.failure_penalty * failing as f64
}
