//! Weibull deterioration on a latent effective age.
//!
//! The Markov state of a component is `(age, failed)`. Its condition index is
//! `100 * exp(-(age / lambda)^k)`; randomness enters through per-instance
//! parameter draws, optional lognormal age increments and the catastrophic
//! hazard. Maintenance acts on the age.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::model::{Action, ComponentSpec, ComponentState, Step, MAX_SINCE_INSPECTION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    /// Shape used for components that do not set `k` themselves.
    pub k_mean: f64,
    /// Spread of the per-instance shape draw.
    pub k_std: f64,
    pub k_min: f64,
    pub lambda_mean: f64,
    pub lambda_std: f64,
    pub lambda_min: f64,
    /// Sigma of the lognormal per-step age increment; 0 ages exactly one step.
    pub age_jitter_std: f64,
    /// CI points restored by a repair.
    pub repair_gain: f64,
    pub redraw_on_replace: bool,
    /// Gaussian inspection noise in CI points.
    pub obs_noise_std: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            k_mean: 2.0,
            k_std: 0.0,
            k_min: 0.1,
            lambda_mean: 50.0,
            lambda_std: 0.0,
            lambda_min: 1.0,
            age_jitter_std: 0.0,
            repair_gain: 30.0,
            redraw_on_replace: false,
            obs_noise_std: 0.0,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self, path: &str) -> Result<(), ConfigError> {
        for (name, v) in [
            ("k_std", self.k_std),
            ("lambda_std", self.lambda_std),
            ("age_jitter_std", self.age_jitter_std),
            ("obs_noise_std", self.obs_noise_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::new(format!("{path}.{name}"), "must be >= 0"));
            }
        }
        for (name, v) in [
            ("k_mean", self.k_mean),
            ("lambda_mean", self.lambda_mean),
            ("k_min", self.k_min),
            ("lambda_min", self.lambda_min),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::new(format!("{path}.{name}"), "must be > 0"));
            }
        }
        if !(self.repair_gain > 0.0 && self.repair_gain <= 100.0) {
            return Err(ConfigError::new(
                format!("{path}.repair_gain"),
                "must lie in (0, 100]",
            ));
        }
        Ok(())
    }

    /// Degenerate configuration: no parameter spread, no aging noise.
    pub fn deterministic() -> Self {
        Self::default()
    }
}

/// Realized Weibull parameters of one component instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentParams {
    pub k: f64,
    pub lambda: f64,
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64, floor: f64) -> f64 {
    if std == 0.0 {
        return mean;
    }
    let normal = Normal::new(mean, std).expect("std validated finite and positive");
    for _ in 0..1024 {
        let x = normal.sample(rng);
        if x >= floor {
            return x;
        }
    }
    // Mean sits far below the floor; the truncated mass is all at the floor.
    floor
}

/// Draws `(k, lambda)` around the given means using the config's spreads and floors.
pub fn sample_params_around<R: Rng + ?Sized>(
    rng: &mut R,
    k_mean: f64,
    lambda_mean: f64,
    config: &DynamicsConfig,
) -> ComponentParams {
    let k = truncated_normal(rng, k_mean, config.k_std, config.k_min);
    let lambda = truncated_normal(rng, lambda_mean, config.lambda_std, config.lambda_min);
    ComponentParams { k, lambda }
}

/// Draws `(k, lambda)` from the config's own means, seeded.
pub fn sample_component_params(config: &DynamicsConfig, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = sample_params_around(&mut rng, config.k_mean, config.lambda_mean, config);
    (p.k, p.lambda)
}

pub fn ci_from_age(age: f64, k: f64, lambda: f64) -> f64 {
    100.0 * (-(age / lambda).powf(k)).exp()
}

pub fn age_from_ci(ci: f64, k: f64, lambda: f64) -> Result<f64> {
    if !(ci > 0.0 && ci <= 100.0) {
        return Err(Error::Domain(format!(
            "condition index {ci} has no finite age (expected 0 < ci <= 100)"
        )));
    }
    if ci == 100.0 {
        return Ok(0.0);
    }
    Ok(lambda * (-(ci / 100.0).ln()).powf(1.0 / k))
}

/// One step of natural deterioration followed by the catastrophic hazard.
///
/// Hard-failed components are returned unchanged.
pub fn deteriorate_step<R: Rng + ?Sized>(
    state: &ComponentState,
    params: &ComponentParams,
    hazard: f64,
    config: &DynamicsConfig,
    rng: &mut R,
) -> ComponentState {
    if state.failed {
        return *state;
    }
    let mut next = *state;
    let increment = if config.age_jitter_std > 0.0 {
        let z: f64 = Normal::new(0.0, config.age_jitter_std)
            .expect("validated")
            .sample(rng);
        z.exp()
    } else {
        1.0
    };
    next.age += increment;
    next.ci = ci_from_age(next.age, params.k, params.lambda);
    if hazard > 0.0 && rng.random::<f64>() < hazard {
        next.failed = true;
        next.ci = 0.0;
    }
    next.steps_since_inspection = next
        .steps_since_inspection
        .saturating_add(1)
        .min(MAX_SINCE_INSPECTION);
    next
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Immediate effect of an action on latent state.
///
/// Parameter redraws on replacement are handled by the caller, which owns the
/// parameter stream.
pub fn apply_action_effect<R: Rng + ?Sized>(
    state: &ComponentState,
    params: &ComponentParams,
    config: &DynamicsConfig,
    action: Action,
    obs_rng: &mut R,
) -> ComponentState {
    let mut next = *state;
    match action {
        Action::DoNothing => {}
        Action::Inspect => {
            let noise = if config.obs_noise_std > 0.0 {
                Normal::new(0.0, config.obs_noise_std)
                    .expect("validated")
                    .sample(obs_rng)
            } else {
                0.0
            };
            next.last_obs = round_half_up(state.ci + noise).clamp(0.0, 100.0) as u8;
            next.steps_since_inspection = 0;
        }
        Action::Repair => {
            if !state.failed {
                next.ci = (state.ci + config.repair_gain).min(100.0);
                // ci > 0 here: unfailed components have positive CI and the gain is positive.
                next.age = age_from_ci(next.ci, params.k, params.lambda).unwrap_or(0.0);
                next.ci = ci_from_age(next.age, params.k, params.lambda);
            }
        }
        Action::Replace => {
            next.age = 0.0;
            next.ci = 100.0;
            next.failed = false;
            next.last_obs = 100;
            next.steps_since_inspection = 0;
        }
    }
    next
}

/// `false` while `t` falls inside one of the component's unavailability windows.
pub fn is_available(spec: &ComponentSpec, t: Step) -> bool {
    !spec.availability_windows.iter().any(|w| w.contains(t))
}
