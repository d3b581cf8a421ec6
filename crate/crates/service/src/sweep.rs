//! What-if sweeps: many independent continuations of a session's current state.

use infrasim::model::{Action, Step};
use infrasim::policy::policy_from_descriptor;
use infrasim::rng::derive_seed;
use infrasim::sim::{DowngradeReason, Env};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

pub const MAX_SWEEP_SEEDS: usize = 10_000;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRequest {
    /// Policy descriptor driving each continuation. Defaults to `no-action`.
    #[serde(default)]
    pub policy: Option<String>,
    /// Fixed action vectors, one per step; steps past the end do nothing.
    #[serde(default)]
    pub plan: Option<Vec<Vec<Action>>>,
    pub n_seeds: usize,
    /// Maximum number of further steps; defaults to the rest of the episode.
    #[serde(default)]
    pub horizon: Option<Step>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Distribution {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        // Shifted by the first value so that equal inputs give exactly zero spread.
        let shift = values[0];
        let d_mean = values.iter().map(|v| v - shift).sum::<f64>() / n;
        let mean = shift + d_mean;
        let std = if values.len() > 1 {
            let ss: f64 = values.iter().map(|v| (v - shift - d_mean).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            n: values.len(),
            mean,
            std,
            min: sorted[0],
            p10: quantile(&sorted, 0.1),
            p50: quantile(&sorted, 0.5),
            p90: quantile(&sorted, 0.9),
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    pub seed: u64,
    pub steps: Step,
    pub total_return: f64,
    pub failures: usize,
    pub ettf: f64,
    /// Post-step time of the first action refused for lack of budget.
    pub budget_exhaustion_step: Option<Step>,
    /// First-failure time per component, if it failed by the end.
    pub failure_times: Vec<Option<Step>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub session: String,
    pub from_step: Step,
    pub driver: String,
    pub n_seeds: usize,
    pub episode_return: Distribution,
    pub failures: Distribution,
    pub ettf: Distribution,
    /// Over continuations that ran out of budget; absent when none did.
    pub budget_exhaustion_step: Option<Distribution>,
    pub exhausted_fraction: f64,
    /// Pooled over components and continuations; censored components excluded.
    pub failure_time: Option<Distribution>,
    pub censored_components: usize,
    pub continuations: Vec<Continuation>,
}

enum Driver<'a> {
    Policy(&'a str),
    Plan(&'a [Vec<Action>]),
}

fn continue_once(env: &Env, driver: &Driver<'_>, seed: u64, limit: Step) -> Result<Continuation, ApiError> {
    let mut env = env.clone();
    env.reseed(seed);
    let n = env.n_components();
    let mut policy = match driver {
        Driver::Policy(d) => {
            let mut p = policy_from_descriptor(d)?;
            p.reset(env.config());
            Some(p)
        }
        Driver::Plan(_) => None,
    };
    let mut obs = env.observe();
    let mut steps = 0;
    let mut total_return = 0.0;
    let mut failures = 0;
    let mut exhausted = None;
    while !env.is_done() && steps < limit {
        let actions = match (&mut policy, driver) {
            (Some(p), _) => p.act(&obs, env.t(), env.config()),
            (None, Driver::Plan(plan)) => plan
                .get(steps as usize)
                .cloned()
                .unwrap_or_else(|| vec![Action::DoNothing; n]),
            (None, Driver::Policy(_)) => unreachable!("policy driver always builds a policy"),
        };
        let r = env.step(&actions)?;
        if exhausted.is_none()
            && r.info
                .downgrades
                .iter()
                .any(|d| d.reason == DowngradeReason::InsufficientBudget)
        {
            exhausted = Some(r.info.t + 1);
        }
        total_return += r.reward;
        failures += r.info.failures.len();
        obs = r.observation;
        steps += 1;
    }
    let st = env.state();
    let horizon = env.config().horizon;
    let censor = if env.is_done() { horizon } else { env.t() };
    let ettf = st
        .first_failure
        .iter()
        .map(|f| f64::from(f.unwrap_or(censor).min(censor)))
        .sum::<f64>()
        / n as f64;
    Ok(Continuation {
        seed,
        steps,
        total_return,
        failures,
        ettf,
        budget_exhaustion_step: exhausted,
        failure_times: st.first_failure.clone(),
    })
}

pub fn run_sweep(session_id: &str, env: &Env, request: &SweepRequest) -> Result<SweepSummary, ApiError> {
    if request.n_seeds < 1 || request.n_seeds > MAX_SWEEP_SEEDS {
        return Err(ApiError::unprocessable(format!(
            "n_seeds must be between 1 and {MAX_SWEEP_SEEDS}"
        )));
    }
    let n = env.n_components();
    let driver = match (&request.policy, &request.plan) {
        (Some(_), Some(_)) => {
            return Err(ApiError::unprocessable("give either `policy` or `plan`, not both"))
        }
        (Some(d), None) => Driver::Policy(d),
        (None, Some(plan)) => {
            if let Some(bad) = plan.iter().position(|a| a.len() != n) {
                return Err(ApiError::unprocessable(format!(
                    "plan step {bad} has {} actions, expected {n}",
                    plan[bad].len()
                )));
            }
            Driver::Plan(plan)
        }
        (None, None) => Driver::Policy("no-action"),
    };
    if let Driver::Policy(d) = driver {
        policy_from_descriptor(d)?;
    }
    let limit = request.horizon.unwrap_or(Step::MAX);
    let base = env.state().stream_seed;
    let t = env.t();
    let continuations = (0..request.n_seeds)
        .into_par_iter()
        .map(|j| continue_once(env, &driver, derive_seed(&[base, u64::from(t), j as u64]), limit))
        .collect::<Result<Vec<_>, _>>()?;

    let pick = |f: fn(&Continuation) -> f64| continuations.iter().map(f).collect::<Vec<_>>();
    let exhaustion: Vec<f64> = continuations
        .iter()
        .filter_map(|c| c.budget_exhaustion_step.map(f64::from))
        .collect();
    let failure_times: Vec<f64> = continuations
        .iter()
        .flat_map(|c| c.failure_times.iter().flatten().map(|&s| f64::from(s)))
        .collect();
    let censored = continuations
        .iter()
        .map(|c| c.failure_times.iter().filter(|f| f.is_none()).count())
        .sum();
    Ok(SweepSummary {
        session: session_id.to_string(),
        from_step: t,
        driver: match driver {
            Driver::Policy(d) => policy_from_descriptor(d)?.descriptor(),
            Driver::Plan(p) => format!("plan:{}", p.len()),
        },
        n_seeds: request.n_seeds,
        episode_return: Distribution::of(&pick(|c| c.total_return)).expect("n_seeds >= 1"),
        failures: Distribution::of(&pick(|c| c.failures as f64)).expect("n_seeds >= 1"),
        ettf: Distribution::of(&pick(|c| c.ettf)).expect("n_seeds >= 1"),
        exhausted_fraction: exhaustion.len() as f64 / request.n_seeds as f64,
        budget_exhaustion_step: Distribution::of(&exhaustion),
        failure_time: Distribution::of(&failure_times),
        censored_components: censored,
        continuations,
    })
}
