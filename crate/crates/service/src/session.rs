//! One steerable episode: environment, log so far, and an optional advisory policy.

use std::collections::BTreeMap;
use std::sync::Arc;

use infrasim::io::log::{episode_log_to_string, now_ms, read_episode_log, EpisodeLog, RecordExtras};
use infrasim::model::{Action, Step};
use infrasim::policy::{policy_from_descriptor, Policy};
use infrasim::sim::episode::log_header;
use infrasim::sim::{EpisodeTally, Env, Observation, ScenarioConfig, SimState, StepResult};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

pub struct Session {
    pub id: String,
    /// Ancestors, oldest first; the last entry is the direct parent.
    pub lineage: Vec<String>,
    pub created_at_ms: u64,
    pub env: Env,
    pub log: EpisodeLog,
    pub tally: EpisodeTally,
    pub timestamps: bool,
    policy: Option<Box<dyn Policy>>,
    suggestion: Option<Vec<Action>>,
}

/// What a client sees of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub parent: Option<String>,
    pub lineage: Vec<String>,
    pub created_at_ms: u64,
    pub scenario: String,
    pub fingerprint: String,
    pub seed: u64,
    pub n_components: usize,
    pub horizon: Step,
    pub t: Step,
    pub done: bool,
    pub observation: Observation,
    pub policy: Option<String>,
    pub suggested: Option<Vec<Action>>,
    pub steps_logged: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRequest {
    /// Full action vector. When absent, the attached policy's suggestion is used.
    #[serde(default)]
    pub actions: Option<Vec<Action>>,
    /// Per-component replacements applied on top of the suggestion.
    #[serde(default)]
    pub overrides: BTreeMap<usize, Action>,
    #[serde(default)]
    pub annotation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepView {
    pub session: String,
    #[serde(flatten)]
    pub result: StepResult,
    pub actions: Vec<Action>,
    /// Suggestion for the next step, if a policy is attached and the episode continues.
    pub suggested: Option<Vec<Action>>,
}

impl Session {
    pub fn create(
        id: String,
        config: ScenarioConfig,
        seed: u64,
        policy: Option<&str>,
        include_true_state: bool,
        timestamps: bool,
    ) -> Result<Self, ApiError> {
        let policy = policy.map(policy_from_descriptor).transpose()?;
        let (env, obs) = Env::reset(Arc::new(config), seed)?;
        let created_at_ms = now_ms();
        let descriptor = policy.as_ref().map_or_else(|| "manual".to_string(), |p| p.descriptor());
        let log = EpisodeLog::new(log_header(
            env.config(),
            seed,
            &descriptor,
            include_true_state,
            &obs,
            timestamps.then_some(created_at_ms),
        ));
        let mut session = Self {
            id,
            lineage: Vec::new(),
            created_at_ms,
            env,
            log,
            tally: EpisodeTally::default(),
            timestamps,
            policy,
            suggestion: None,
        };
        if let Some(p) = session.policy.as_mut() {
            p.reset(session.env.config());
        }
        session.refresh_suggestion();
        Ok(session)
    }

    fn refresh_suggestion(&mut self) {
        self.suggestion = match (&mut self.policy, self.env.is_done()) {
            (Some(p), false) => {
                let obs = self.env.observe();
                Some(p.act(&obs, self.env.t(), self.env.config()))
            }
            _ => None,
        };
    }

    pub fn policy_descriptor(&self) -> Option<String> {
        self.policy.as_ref().map(|p| p.descriptor())
    }

    pub fn view(&self) -> SessionView {
        let config = self.env.config();
        SessionView {
            id: self.id.clone(),
            parent: self.lineage.last().cloned(),
            lineage: self.lineage.clone(),
            created_at_ms: self.created_at_ms,
            scenario: config.name.clone(),
            fingerprint: self.log.header.fingerprint.clone(),
            seed: self.env.state().seed,
            n_components: config.n_components(),
            horizon: config.horizon,
            t: self.env.t(),
            done: self.env.is_done(),
            observation: self.env.observe(),
            policy: self.policy_descriptor(),
            suggested: self.suggestion.clone(),
            steps_logged: self.log.records.len(),
        }
    }

    pub fn step(&mut self, request: StepRequest) -> Result<StepView, ApiError> {
        if self.env.is_done() {
            return Err(ApiError::conflict(format!(
                "session {} finished at step {}",
                self.id,
                self.env.t()
            )));
        }
        let n = self.env.n_components();
        let mut actions = match (request.actions, &self.suggestion) {
            (Some(a), _) => a,
            (None, Some(s)) => s.clone(),
            (None, None) => {
                return Err(ApiError::unprocessable(
                    "`actions` is required when no policy is attached",
                ))
            }
        };
        if actions.len() != n {
            return Err(ApiError::unprocessable(format!(
                "expected {n} actions, got {}",
                actions.len()
            )));
        }
        for (&i, &a) in &request.overrides {
            let slot = actions.get_mut(i).ok_or_else(|| {
                ApiError::unprocessable(format!("override index {i} out of range for {n} components"))
            })?;
            *slot = a;
        }
        let result = self.env.step(&actions)?;
        self.tally.add(&result);
        let extras = RecordExtras {
            annotation: request.annotation,
            suggested: self.suggestion.clone(),
            suggestion_source: self.suggestion.as_ref().and(self.policy_descriptor()),
            timestamp_ms: self.timestamps.then(now_ms),
        };
        self.log.push_step(&actions, &result, extras);
        if self.env.is_done() {
            self.log.footer = Some(self.tally.summary(&self.env));
        }
        self.refresh_suggestion();
        Ok(StepView {
            session: self.id.clone(),
            result,
            actions,
            suggested: self.suggestion.clone(),
        })
    }

    /// Deep copy under a new id. The copy shares no mutable state with `self`.
    pub fn branch(&self, id: String) -> Self {
        let mut lineage = self.lineage.clone();
        lineage.push(self.id.clone());
        Self {
            id,
            lineage,
            created_at_ms: now_ms(),
            env: self.env.clone(),
            log: self.log.clone(),
            tally: self.tally.clone(),
            timestamps: self.timestamps,
            policy: self.policy.clone(),
            suggestion: self.suggestion.clone(),
        }
    }

    pub fn export(&self) -> String {
        episode_log_to_string(&self.log)
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            id: self.id.clone(),
            lineage: self.lineage.clone(),
            created_at_ms: self.created_at_ms,
            timestamps: self.timestamps,
            policy: self.policy_descriptor(),
            tally: self.tally.clone(),
            state: self.env.state().clone(),
            log: self.export(),
        }
    }

    /// Rebuilds a session. Policy state is recovered by feeding the policy
    /// the logged observations in order, as the live session did.
    pub fn restore(snap: SessionSnapshot) -> Result<Self, ApiError> {
        let log = read_episode_log(snap.log.as_bytes())?;
        let config: Arc<ScenarioConfig> = Arc::new(log.header.scenario.clone());
        let env = Env::restore(Arc::clone(&config), snap.state)?;
        let mut policy = snap.policy.as_deref().map(policy_from_descriptor).transpose()?;
        if let Some(p) = policy.as_mut() {
            p.reset(&config);
            let mut obs = log.header.initial_observation.clone();
            for r in &log.records {
                p.act(&obs, r.step, &config);
                obs = r.observation.clone();
            }
        }
        let mut session = Self {
            id: snap.id,
            lineage: snap.lineage,
            created_at_ms: snap.created_at_ms,
            env,
            log,
            tally: snap.tally,
            timestamps: snap.timestamps,
            policy,
            suggestion: None,
        };
        session.refresh_suggestion();
        Ok(session)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub id: String,
    pub lineage: Vec<String>,
    pub created_at_ms: u64,
    pub timestamps: bool,
    pub policy: Option<String>,
    pub tally: EpisodeTally,
    pub state: SimState,
    pub log: String,
}
