//! Running a policy through a full episode, and replaying recorded episodes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::log::{now_ms, EpisodeLog, EpisodeSummary, LogHeader, RecordExtras, StepRecord, LOG_FORMAT_VERSION};
use crate::io::scenario::fingerprint;
use crate::model::{Action, Step};
use crate::policy::Policy;
use crate::sim::{Env, ScenarioConfig, StepResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EpisodeOptions {
    /// Record the continuous CI of every component in each step record.
    pub include_true_state: bool,
    /// Stamp the header and records with wall-clock times. Off by default so
    /// that equal inputs give byte-identical logs.
    pub timestamps: bool,
}

/// Running totals maintained while stepping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTally {
    total_return: f64,
    failures_total: usize,
    replacements_total: usize,
    terminated: bool,
    truncated: bool,
}

impl EpisodeTally {
    pub fn add(&mut self, result: &StepResult) {
        self.total_return += result.reward;
        self.failures_total += result.info.failures.len();
        self.replacements_total += result
            .info
            .applied
            .iter()
            .filter(|a| **a == Action::Replace)
            .count();
        self.terminated = result.terminated;
        self.truncated = result.truncated;
    }

    pub fn summary(&self, env: &Env) -> EpisodeSummary {
        let st = env.state();
        let horizon = env.config().horizon;
        EpisodeSummary {
            episode_length: st.t,
            total_return: self.total_return,
            failures_total: self.failures_total,
            replacements_total: self.replacements_total,
            spent_total: st.budget.spent_total,
            allocated_total: st.budget.allocated_total,
            budget_utilization_pct: st.budget.utilization_pct(),
            ettf: mean_censored(&st.first_failure, horizon),
            terminated: self.terminated,
            truncated: self.truncated,
        }
    }
}

fn mean_censored(first_failure: &[Option<Step>], horizon: Step) -> f64 {
    let total: f64 = first_failure
        .iter()
        .map(|f| f64::from(f.unwrap_or(horizon).min(horizon)))
        .sum();
    total / first_failure.len() as f64
}

fn checked_act(
    policy: &mut dyn Policy,
    env: &Env,
    obs: &crate::sim::Observation,
) -> Result<Vec<Action>> {
    let t = env.t();
    let actions = policy.act(obs, t, env.config());
    if actions.len() != env.n_components() {
        return Err(Error::PolicyContract {
            step: t,
            message: format!(
                "policy `{}` returned {} actions for {} components",
                policy.descriptor(),
                actions.len(),
                env.n_components()
            ),
        });
    }
    Ok(actions)
}

/// Everything measured about one episode, without per-step records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub summary: EpisodeSummary,
    /// Post-step time of each component's first failure.
    pub first_failure: Vec<Option<Step>>,
}

/// Runs to termination keeping only aggregate results. Suited to large fleets.
pub fn run_episode_outcome(
    config: Arc<ScenarioConfig>,
    policy: &mut dyn Policy,
    seed: u64,
) -> Result<EpisodeOutcome> {
    let (mut env, mut obs) = Env::reset(config, seed)?;
    policy.reset(env.config());
    let mut tally = EpisodeTally::default();
    while !env.is_done() {
        let actions = checked_act(policy, &env, &obs)?;
        let result = env.step(&actions)?;
        tally.add(&result);
        obs = result.observation;
    }
    Ok(EpisodeOutcome {
        summary: tally.summary(&env),
        first_failure: env.state().first_failure.clone(),
    })
}

pub fn log_header(
    config: &ScenarioConfig,
    seed: u64,
    policy: &str,
    include_true_state: bool,
    initial: &crate::sim::Observation,
    started_at_ms: Option<u64>,
) -> LogHeader {
    LogHeader {
        format_version: LOG_FORMAT_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        fingerprint: fingerprint(config),
        seed,
        policy: policy.to_string(),
        started_at_ms,
        include_true_state,
        n_components: config.n_components(),
        initial_observation: initial.clone(),
        scenario: config.clone(),
    }
}

/// Runs to termination and returns the complete, closed log.
pub fn run_episode(
    config: Arc<ScenarioConfig>,
    policy: &mut dyn Policy,
    seed: u64,
    options: &EpisodeOptions,
) -> Result<EpisodeLog> {
    let (mut env, mut obs) = Env::reset(config, seed)?;
    policy.reset(env.config());
    let stamp = || options.timestamps.then(now_ms);
    let mut log = EpisodeLog::new(log_header(
        env.config(),
        seed,
        &policy.descriptor(),
        options.include_true_state,
        &obs,
        stamp(),
    ));
    let mut tally = EpisodeTally::default();
    while !env.is_done() {
        let actions = checked_act(policy, &env, &obs)?;
        let result = env.step(&actions)?;
        tally.add(&result);
        log.push_step(
            &actions,
            &result,
            RecordExtras {
                timestamp_ms: stamp(),
                ..RecordExtras::default()
            },
        );
        obs = result.observation;
    }
    log.footer = Some(tally.summary(&env));
    Ok(log)
}

/// Result of re-simulating a log from its header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub steps_checked: usize,
    /// First step whose record disagrees with the re-simulation.
    pub first_divergence: Option<Divergence>,
    /// Index of the first record whose digest breaks the chain.
    pub broken_digest: Option<usize>,
}

impl ReplayOutcome {
    pub fn is_faithful(&self) -> bool {
        self.first_divergence.is_none() && self.broken_digest.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub step: Step,
    pub field: String,
}

fn compare(record: &StepRecord, result: &StepResult, include_true: bool) -> Option<&'static str> {
    if record.step != result.info.t {
        return Some("step");
    }
    if record.observation != result.observation {
        return Some("observation");
    }
    if record.reward.to_bits() != result.reward.to_bits() {
        return Some("reward");
    }
    if record.downgrades != result.info.downgrades {
        return Some("downgrades");
    }
    if record.charges != result.info.charges {
        return Some("charges");
    }
    if record.budget_remaining.to_bits() != result.info.budget.remaining.to_bits() {
        return Some("budget_remaining");
    }
    if record.failures != result.info.failures {
        return Some("failures");
    }
    if (record.terminated, record.truncated) != (result.terminated, result.truncated) {
        return Some("termination");
    }
    if include_true && record.true_ci.as_ref() != Some(&result.info.true_ci) {
        return Some("true_ci");
    }
    None
}

/// Re-simulates the recorded actions from the header's scenario and seed,
/// and checks every recorded field and the digest chain.
pub fn replay_log(log: &EpisodeLog) -> Result<ReplayOutcome> {
    let header = &log.header;
    if fingerprint(&header.scenario) != header.fingerprint {
        return Ok(ReplayOutcome {
            steps_checked: 0,
            first_divergence: Some(Divergence {
                step: 0,
                field: "fingerprint".into(),
            }),
            broken_digest: log.first_broken_digest(),
        });
    }
    let (mut env, obs) = Env::reset(Arc::new(header.scenario.clone()), header.seed)?;
    let mut outcome = ReplayOutcome {
        steps_checked: 0,
        first_divergence: None,
        broken_digest: log.first_broken_digest(),
    };
    if obs != header.initial_observation {
        outcome.first_divergence = Some(Divergence {
            step: 0,
            field: "initial_observation".into(),
        });
        return Ok(outcome);
    }
    let mut tally = EpisodeTally::default();
    for record in &log.records {
        if env.is_done() {
            outcome.first_divergence = Some(Divergence {
                step: record.step,
                field: "episode_length".into(),
            });
            return Ok(outcome);
        }
        let result = match env.step(&record.actions) {
            Ok(r) => r,
            Err(_) => {
                outcome.first_divergence = Some(Divergence {
                    step: record.step,
                    field: "actions".into(),
                });
                return Ok(outcome);
            }
        };
        if let Some(field) = compare(record, &result, header.include_true_state) {
            outcome.first_divergence = Some(Divergence {
                step: record.step,
                field: field.into(),
            });
            return Ok(outcome);
        }
        tally.add(&result);
        outcome.steps_checked += 1;
    }
    if let Some(footer) = &log.footer {
        let field = if footer.episode_length != env.t() || !env.is_done() {
            Some("episode_length")
        } else if *footer != tally.summary(&env) {
            Some("summary")
        } else {
            None
        };
        outcome.first_divergence = field.map(|f| Divergence {
            step: env.t(),
            field: f.into(),
        });
    }
    Ok(outcome)
}
