//! The environment: scenario description, `reset`/`step`, and the per-step report.

pub mod episode;
mod observation;
mod reward;

pub use episode::{
    replay_log, run_episode, run_episode_outcome, Divergence, EpisodeOptions, EpisodeOutcome, EpisodeTally,
    ReplayOutcome,
};
pub use observation::Observation;
pub use reward::{reward_threshold_margin, RewardConfig, RewardKind, CUSTOM_REWARDS};

use std::collections::HashSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    apply_action_effect, deteriorate_step, is_available, sample_params_around, ComponentParams,
    DynamicsConfig,
};
use crate::economics::{action_cost, advance_cycle, charge, BudgetModel, BudgetState};
use crate::error::{ConfigError, Error, Result};
use crate::model::{
    Action, ComponentSpec, ComponentState, Hierarchy, Metadata, Step, MAX_SINCE_INSPECTION,
};
use crate::rng::{derive_seed, substream, ComponentStreams, Purpose};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

/// Below this many components the deterioration phase runs serially.
const PARALLEL_MIN_COMPONENTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// End the episode once any component is failing.
    #[default]
    FirstFailure,
    /// Run to the horizon regardless of failures.
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub format_version: u32,
    pub name: String,
    pub components: Vec<ComponentSpec>,
    pub dynamics: DynamicsConfig,
    pub budget: BudgetModel,
    pub horizon: Step,
    pub reward: RewardConfig,
    pub termination: Termination,
    pub master_seed: u64,
    pub hierarchy: Option<Hierarchy>,
    pub metadata: Metadata,
}

impl ScenarioConfig {
    /// A scenario with documented defaults for everything but components and budget.
    pub fn new(components: Vec<ComponentSpec>, budget: BudgetModel) -> Self {
        Self {
            format_version: SCENARIO_FORMAT_VERSION,
            name: String::new(),
            components,
            dynamics: DynamicsConfig::default(),
            budget,
            horizon: 100,
            reward: RewardConfig::default(),
            termination: Termination::FirstFailure,
            master_seed: 0,
            hierarchy: None,
            metadata: Metadata::new(),
        }
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.delta).collect()
    }

    pub fn component_ids(&self) -> Vec<u64> {
        self.components.iter().map(|c| c.id).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.format_version > SCENARIO_FORMAT_VERSION {
            return Err(ConfigError::new(
                "format_version",
                format!(
                    "version {} is newer than supported version {SCENARIO_FORMAT_VERSION}",
                    self.format_version
                ),
            ));
        }
        if self.horizon < 1 {
            return Err(ConfigError::new("horizon", "must be >= 1"));
        }
        if self.components.is_empty() {
            return Err(ConfigError::new("components", "at least one component is required"));
        }
        let mut seen = HashSet::with_capacity(self.components.len());
        for (i, c) in self.components.iter().enumerate() {
            let path = format!("components[{i}]");
            c.validate(&path)?;
            if !seen.insert(c.id) {
                return Err(ConfigError::new(
                    format!("{path}.id"),
                    format!("duplicate component id {}", c.id),
                ));
            }
        }
        // Budget contention is resolved in list order, which must be id order.
        if let Some(i) = self
            .components
            .windows(2)
            .position(|w| w[0].id >= w[1].id)
        {
            return Err(ConfigError::new(
                format!("components[{}].id", i + 1),
                "component ids must be listed in ascending order",
            ));
        }
        self.dynamics.validate("dynamics")?;
        self.budget.validate("budget")?;
        self.reward.validate("reward")?;
        if let Some(h) = &self.hierarchy {
            h.validate(&self.component_ids(), "hierarchy")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DowngradeReason {
    Unavailable,
    RepairOnFailed,
    InsufficientBudget,
}

/// A requested action that was replaced by `DoNothing`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Downgrade {
    pub component: usize,
    pub requested: Action,
    pub reason: DowngradeReason,
}

/// An accepted, priced action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Charge {
    pub component: usize,
    pub action: Action,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Step index this report covers.
    pub t: Step,
    /// Continuous latent CI after the step.
    pub true_ci: Vec<f64>,
    pub applied: Vec<Action>,
    pub downgrades: Vec<Downgrade>,
    pub charges: Vec<Charge>,
    pub cost_total: f64,
    /// Components that entered the failing condition this step.
    pub failures: Vec<usize>,
    pub budget: BudgetState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

/// Everything that evolves during an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: Step,
    /// Seed given to `reset`.
    pub seed: u64,
    /// Seed the dynamic streams currently derive from; differs from `seed` after a reseed.
    pub stream_seed: u64,
    pub components: Vec<ComponentState>,
    pub params: Vec<ComponentParams>,
    pub streams: Vec<ComponentStreams>,
    pub redraws: Vec<u32>,
    pub budget: BudgetState,
    pub failing: Vec<bool>,
    /// Post-step time (`t + 1`) at which each component first failed.
    pub first_failure: Vec<Option<Step>>,
    pub any_failed: bool,
    pub done: bool,
}

/// A running episode of one scenario.
#[derive(Debug, Clone)]
pub struct Env {
    config: Arc<ScenarioConfig>,
    deltas: Vec<f64>,
    state: SimState,
}

impl Env {
    /// Validates the scenario, samples per-instance parameters from `seed`
    /// and returns the environment with its initial observation.
    pub fn reset(config: Arc<ScenarioConfig>, seed: u64) -> Result<(Self, Observation)> {
        config.validate()?;
        let n = config.n_components();
        let params = config
            .components
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let mut rng = substream(seed, i, Purpose::Params);
                sample_params_around(&mut rng, spec.k, spec.lambda, &config.dynamics)
            })
            .collect();
        let streams = (0..n).map(|i| ComponentStreams::new(seed, i)).collect();
        let budget = advance_cycle(&BudgetState::new(&config.budget), &config.budget, 0);
        let state = SimState {
            t: 0,
            seed,
            stream_seed: seed,
            components: vec![ComponentState::pristine(); n],
            params,
            streams,
            redraws: vec![0; n],
            budget,
            failing: vec![false; n],
            first_failure: vec![None; n],
            any_failed: false,
            done: false,
        };
        let env = Self {
            deltas: config.deltas(),
            config,
            state,
        };
        let obs = env.observe();
        Ok((env, obs))
    }

    /// Resets with the scenario's own `master_seed`.
    pub fn reset_default(config: Arc<ScenarioConfig>) -> Result<(Self, Observation)> {
        let seed = config.master_seed;
        Self::reset(config, seed)
    }

    /// Rebuilds an environment from a saved state.
    pub fn restore(config: Arc<ScenarioConfig>, state: SimState) -> Result<Self> {
        config.validate()?;
        let n = config.n_components();
        if state.components.len() != n
            || state.params.len() != n
            || state.streams.len() != n
            || state.redraws.len() != n
            || state.failing.len() != n
            || state.first_failure.len() != n
        {
            return Err(Error::InvalidArgument(format!(
                "saved state does not match a scenario of {n} components"
            )));
        }
        Ok(Self {
            deltas: config.deltas(),
            config,
            state,
        })
    }

    pub fn config(&self) -> &Arc<ScenarioConfig> {
        &self.config
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn t(&self) -> Step {
        self.state.t
    }

    pub fn is_done(&self) -> bool {
        self.state.done
    }

    pub fn n_components(&self) -> usize {
        self.state.components.len()
    }

    /// Replaces the dynamic and observation streams so a copy can evolve
    /// independently of its origin. Sampled parameters are kept.
    pub fn reseed(&mut self, seed: u64) {
        self.state.stream_seed = seed;
        for (i, s) in self.state.streams.iter_mut().enumerate() {
            *s = ComponentStreams::new(seed, i);
        }
    }

    pub fn observe(&self) -> Observation {
        let comps = &self.state.components;
        Observation {
            last_obs: comps.iter().map(|c| c.last_obs).collect(),
            budget: self.state.budget.remaining,
            since_inspection: comps.iter().map(|c| c.steps_since_inspection).collect(),
        }
    }

    /// Advances one step. Phases, in order: budget cycle, per-component
    /// availability/pricing/charging/effects in id order, deterioration of
    /// every component not replaced this step, reward, termination.
    pub fn step(&mut self, actions: &[Action]) -> Result<StepResult> {
        if self.state.done {
            return Err(Error::IllegalState(format!(
                "episode already finished at step {}",
                self.state.t
            )));
        }
        let n = self.n_components();
        if actions.len() != n {
            return Err(Error::InvalidArgument(format!(
                "expected {n} actions, got {}",
                actions.len()
            )));
        }
        let config = Arc::clone(&self.config);
        let dyn_cfg = &config.dynamics;
        let t = self.state.t;
        let st = &mut self.state;

        st.budget = advance_cycle(&st.budget, &config.budget, t);

        let mut applied = vec![Action::DoNothing; n];
        let mut downgrades = Vec::new();
        let mut charges = Vec::new();
        let mut cost_total = 0.0;
        for (i, &action) in actions.iter().enumerate() {
            if action == Action::DoNothing {
                continue;
            }
            let spec = &config.components[i];
            let comp = &mut st.components[i];
            let reason = if !is_available(spec, t) {
                Some(DowngradeReason::Unavailable)
            } else if action == Action::Repair && comp.failed {
                Some(DowngradeReason::RepairOnFailed)
            } else {
                None
            };
            if let Some(reason) = reason {
                downgrades.push(Downgrade {
                    component: i,
                    requested: action,
                    reason,
                });
                continue;
            }
            let cost = action_cost(action, comp, spec)?;
            let (budget, accepted) = charge(&st.budget, cost)?;
            if !accepted {
                downgrades.push(Downgrade {
                    component: i,
                    requested: action,
                    reason: DowngradeReason::InsufficientBudget,
                });
                continue;
            }
            st.budget = budget;
            cost_total += cost;
            charges.push(Charge {
                component: i,
                action,
                amount: cost,
            });
            *comp = apply_action_effect(
                comp,
                &st.params[i],
                dyn_cfg,
                action,
                &mut st.streams[i].observation,
            );
            if action == Action::Replace && dyn_cfg.redraw_on_replace {
                st.redraws[i] += 1;
                let seed = derive_seed(&[st.stream_seed, u64::from(st.redraws[i])]);
                let mut rng = substream(seed, i, Purpose::Params);
                st.params[i] = sample_params_around(&mut rng, spec.k, spec.lambda, dyn_cfg);
            }
            applied[i] = action;
        }

        let evolve = |((comp, streams), (params, (action, spec))): (
            (&mut ComponentState, &mut ComponentStreams),
            (&ComponentParams, (&Action, &ComponentSpec)),
        )| {
            if *action == Action::Replace {
                return;
            }
            if comp.failed {
                comp.steps_since_inspection = comp
                    .steps_since_inspection
                    .saturating_add(1)
                    .min(MAX_SINCE_INSPECTION);
            } else {
                *comp = deteriorate_step(
                    comp,
                    params,
                    spec.catastrophic_hazard,
                    dyn_cfg,
                    &mut streams.dynamics,
                );
            }
            // The inspection of this step is the latest one.
            if *action == Action::Inspect {
                comp.steps_since_inspection = 0;
            }
        };
        if n >= PARALLEL_MIN_COMPONENTS {
            st.components
                .par_iter_mut()
                .zip(st.streams.par_iter_mut())
                .zip(st.params.par_iter().zip(applied.par_iter().zip(config.components.par_iter())))
                .for_each(evolve);
        } else {
            st.components
                .iter_mut()
                .zip(st.streams.iter_mut())
                .zip(st.params.iter().zip(applied.iter().zip(config.components.iter())))
                .for_each(evolve);
        }

        let reported: Vec<f64> = st.components.iter().map(|c| c.reported_ci()).collect();
        let mut failures = Vec::new();
        let mut failing_count = 0usize;
        for (i, comp) in st.components.iter().enumerate() {
            let now = comp.is_failing(self.deltas[i]);
            if now {
                failing_count += 1;
                if !st.failing[i] {
                    failures.push(i);
                    st.first_failure[i].get_or_insert(t + 1);
                }
            }
            st.failing[i] = now;
        }

        let reward = match &config.reward.kind {
            RewardKind::ThresholdMargin => {
                reward_threshold_margin(&reported, &self.deltas, &config.reward)
            }
            RewardKind::SurvivalTime => {
                if st.any_failed {
                    0.0
                } else {
                    1.0
                }
            }
            RewardKind::Custom(tag) => match tag.as_str() {
                "negative_cost" => -cost_total,
                "failure_count" => -(failing_count as f64),
                other => {
                    return Err(Error::Config(ConfigError::new(
                        "reward.kind",
                        format!("unknown custom reward `{other}`"),
                    )))
                }
            },
        };
        st.any_failed |= failing_count > 0;

        let terminated = config.termination == Termination::FirstFailure && failing_count > 0;
        let truncated = !terminated && t + 1 >= config.horizon;
        st.t = t + 1;
        st.done = terminated || truncated;

        let info = StepInfo {
            t,
            true_ci: st.components.iter().map(|c| c.ci).collect(),
            applied,
            downgrades,
            charges,
            cost_total,
            failures,
            budget: st.budget.clone(),
        };
        Ok(StepResult {
            observation: self.observe(),
            reward,
            terminated,
            truncated,
            info,
        })
    }
}
