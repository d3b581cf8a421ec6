//! Baseline decision policies.
//!
//! Policies see only the observation vector and static scenario data, never
//! the latent state. They are selected by descriptor strings such as
//! `no-action`, `rb:tau=10,theta=20,action=replace` or `greedy:cap=25,mix=minor`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::is_available;
use crate::economics::repair_cost;
use crate::error::{Error, Result};
use crate::model::{Action, Step, NO_OBSERVATION};
use crate::sim::{Observation, ScenarioConfig};

/// Scenario metadata key read by the greedy policy when no cap is given.
pub const MAX_ACTIONS_KEY: &str = "max_actions_per_step";

pub trait Policy: Send {
    /// Canonical descriptor; parsing it yields an equivalent policy.
    fn descriptor(&self) -> String;

    fn reset(&mut self, _scenario: &ScenarioConfig) {}

    fn act(&mut self, obs: &Observation, t: Step, scenario: &ScenarioConfig) -> Vec<Action>;

    fn box_clone(&self) -> Box<dyn Policy>;
}

impl Clone for Box<dyn Policy> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

#[derive(Debug, Clone, Default)]
pub struct NoAction;

impl Policy for NoAction {
    fn descriptor(&self) -> String {
        "no-action".into()
    }

    fn act(&mut self, obs: &Observation, _t: Step, _scenario: &ScenarioConfig) -> Vec<Action> {
        vec![Action::DoNothing; obs.n_components()]
    }

    fn box_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

pub fn no_action_policy() -> NoAction {
    NoAction
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerForm {
    /// Act when the observed CI is strictly below `theta`.
    AbsoluteCi,
    /// Act when the observed CI is at most `delta + theta`.
    MarginAboveDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleBasedParams {
    pub inspect_interval: Step,
    pub threshold: f64,
    pub on_trigger: Action,
    pub trigger_form: TriggerForm,
}

impl RuleBasedParams {
    pub fn validate(&self) -> Result<()> {
        if self.inspect_interval < 1 {
            return Err(Error::InvalidArgument("inspection interval must be >= 1".into()));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::InvalidArgument("threshold must be >= 0".into()));
        }
        if !self.on_trigger.is_maintenance() {
            return Err(Error::InvalidArgument(
                "rule-based trigger action must be repair or replace".into(),
            ));
        }
        Ok(())
    }
}

/// Inspects every component each `inspect_interval` steps; a component
/// whose fresh inspection result triggers the rule gets `on_trigger` on the
/// following step.
#[derive(Debug, Clone)]
pub struct RuleBased {
    params: RuleBasedParams,
}

pub fn rule_based_policy(params: RuleBasedParams) -> Result<RuleBased> {
    params.validate()?;
    Ok(RuleBased { params })
}

impl RuleBased {
    fn triggers(&self, observed: u8, delta: f64) -> bool {
        if observed == NO_OBSERVATION {
            return false;
        }
        let o = f64::from(observed);
        match self.params.trigger_form {
            TriggerForm::AbsoluteCi => o < self.params.threshold,
            TriggerForm::MarginAboveDelta => o <= delta + self.params.threshold,
        }
    }
}

impl Policy for RuleBased {
    fn descriptor(&self) -> String {
        let p = &self.params;
        format!(
            "rb:tau={},theta={},action={},form={}",
            p.inspect_interval,
            p.threshold,
            p.on_trigger,
            match p.trigger_form {
                TriggerForm::AbsoluteCi => "absolute",
                TriggerForm::MarginAboveDelta => "margin",
            }
        )
    }

    fn act(&mut self, obs: &Observation, t: Step, scenario: &ScenarioConfig) -> Vec<Action> {
        let inspect_now = t % self.params.inspect_interval == 0;
        obs.last_obs
            .iter()
            .zip(&obs.since_inspection)
            .zip(&scenario.components)
            .map(|((&o, &since), spec)| {
                // since == 0: the observation was taken during the previous step.
                if since == 0 && self.triggers(o, spec.delta) {
                    self.params.on_trigger
                } else if inspect_now {
                    Action::Inspect
                } else {
                    Action::DoNothing
                }
            })
            .collect()
    }

    fn box_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairMix {
    /// Always repair.
    MinorRepair,
    /// Always replace (rehabilitate).
    MajorRehab,
    /// Replace when the observed CI is below the bound, repair otherwise.
    RehabBelow(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyParams {
    /// `None` reads the cap from scenario metadata.
    pub max_actions_per_step: Option<usize>,
    pub repair_mix: RepairMix,
    /// Only components observed strictly below this CI are candidates.
    pub trigger_ci: f64,
    /// Inspect every component on steps divisible by this interval.
    pub inspect_interval: Option<Step>,
}

impl Default for GreedyParams {
    fn default() -> Self {
        Self {
            max_actions_per_step: None,
            repair_mix: RepairMix::RehabBelow(30.0),
            trigger_ci: 70.0,
            inspect_interval: Some(5),
        }
    }
}

/// Maintains the worst `observed CI / importance` components first, within
/// a per-step action cap and an estimate of the remaining budget.
#[derive(Debug, Clone)]
pub struct GreedyImportance {
    params: GreedyParams,
    cap: usize,
    /// Set when maintained; cleared by the next fresh observation.
    stale: Vec<bool>,
}

pub fn greedy_importance_policy(params: GreedyParams) -> Result<GreedyImportance> {
    if params.max_actions_per_step == Some(0) {
        return Err(Error::InvalidArgument("max_actions_per_step must be >= 1".into()));
    }
    if params.inspect_interval == Some(0) {
        return Err(Error::InvalidArgument("inspection interval must be >= 1".into()));
    }
    Ok(GreedyImportance {
        cap: params.max_actions_per_step.unwrap_or(1),
        params,
        stale: Vec::new(),
    })
}

impl Policy for GreedyImportance {
    fn descriptor(&self) -> String {
        let p = &self.params;
        let mut d = String::from("greedy:");
        if let Some(cap) = p.max_actions_per_step {
            d.push_str(&format!("cap={cap},"));
        }
        d.push_str(&match p.repair_mix {
            RepairMix::MinorRepair => "mix=minor".to_string(),
            RepairMix::MajorRehab => "mix=major".to_string(),
            RepairMix::RehabBelow(b) => format!("mix=below:{b}"),
        });
        d.push_str(&format!(",trigger={}", p.trigger_ci));
        match p.inspect_interval {
            Some(i) => d.push_str(&format!(",inspect={i}")),
            None => d.push_str(",inspect=never"),
        }
        d
    }

    fn reset(&mut self, scenario: &ScenarioConfig) {
        self.stale = vec![false; scenario.n_components()];
        self.cap = self.params.max_actions_per_step.unwrap_or_else(|| {
            scenario
                .metadata
                .get(MAX_ACTIONS_KEY)
                .and_then(|v| v.parse().ok())
                .filter(|&c| c >= 1)
                .unwrap_or(10)
        });
    }

    fn act(&mut self, obs: &Observation, t: Step, scenario: &ScenarioConfig) -> Vec<Action> {
        let n = obs.n_components();
        if self.stale.len() != n {
            self.reset(scenario);
        }
        for (stale, &since) in self.stale.iter_mut().zip(&obs.since_inspection) {
            if since == 0 {
                *stale = false;
            }
        }
        if let Some(interval) = self.params.inspect_interval {
            if t % interval == 0 {
                return vec![Action::Inspect; n];
            }
        }

        let mut candidates: Vec<(f64, usize)> = obs
            .last_obs
            .iter()
            .enumerate()
            .filter(|&(i, &o)| {
                o != NO_OBSERVATION
                    && f64::from(o) < self.params.trigger_ci
                    && !self.stale[i]
                    && scenario.components[i].importance > 0.0
                    && is_available(&scenario.components[i], t)
            })
            .map(|(i, &o)| (f64::from(o) / scenario.components[i].importance, i))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut actions = vec![Action::DoNothing; n];
        let mut budget = obs.budget;
        for (_, i) in candidates.into_iter().take(self.cap) {
            let spec = &scenario.components[i];
            let observed = f64::from(obs.last_obs[i]);
            let action = match self.params.repair_mix {
                RepairMix::MinorRepair => Action::Repair,
                RepairMix::MajorRehab => Action::Replace,
                RepairMix::RehabBelow(bound) if observed < bound => Action::Replace,
                RepairMix::RehabBelow(_) => Action::Repair,
            };
            let estimate = match action {
                Action::Replace => spec.c_m,
                _ => repair_cost(observed, spec).unwrap_or(f64::INFINITY),
            };
            if estimate > budget {
                break;
            }
            budget -= estimate;
            actions[i] = action;
            self.stale[i] = true;
        }
        actions
    }

    fn box_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Parsed policy descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    NoAction,
    RuleBased(RuleBasedParams),
    Greedy(GreedyParams),
}

impl PolicySpec {
    pub fn build(&self) -> Result<Box<dyn Policy>> {
        Ok(match self {
            PolicySpec::NoAction => Box::new(NoAction),
            PolicySpec::RuleBased(p) => Box::new(rule_based_policy(*p)?),
            PolicySpec::Greedy(p) => Box::new(greedy_importance_policy(p.clone())?),
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.build() {
            Ok(p) => f.write_str(&p.descriptor()),
            Err(_) => write!(f, "{self:?}"),
        }
    }
}

fn parse_kv(body: &str, whole: &str) -> Result<Vec<(String, String)>> {
    body.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::UnknownPolicy(whole.to_string()))?;
            Ok((k.trim().to_ascii_lowercase(), v.trim().to_string()))
        })
        .collect()
}

fn num<T: FromStr>(value: &str, key: &str, whole: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::InvalidArgument(format!("policy `{whole}`: bad value `{value}` for `{key}`"))
    })
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, body) = s.split_once(':').unwrap_or((s, ""));
        match name.to_ascii_lowercase().as_str() {
            "no-action" | "noaction" | "none" => Ok(PolicySpec::NoAction),
            "rb" | "rule-based" => {
                let mut p = RuleBasedParams {
                    inspect_interval: 5,
                    threshold: 20.0,
                    on_trigger: Action::Replace,
                    trigger_form: TriggerForm::AbsoluteCi,
                };
                for (k, v) in parse_kv(body, s)? {
                    match k.as_str() {
                        "tau" => p.inspect_interval = num(&v, &k, s)?,
                        "theta" => p.threshold = num(&v, &k, s)?,
                        "action" => p.on_trigger = v.parse()?,
                        "form" => {
                            p.trigger_form = match v.as_str() {
                                "absolute" | "abs" => TriggerForm::AbsoluteCi,
                                "margin" => TriggerForm::MarginAboveDelta,
                                _ => return Err(Error::UnknownPolicy(s.to_string())),
                            }
                        }
                        _ => return Err(Error::UnknownPolicy(s.to_string())),
                    }
                }
                p.validate()?;
                Ok(PolicySpec::RuleBased(p))
            }
            "greedy" => {
                let mut p = GreedyParams::default();
                for (k, v) in parse_kv(body, s)? {
                    match k.as_str() {
                        "cap" => p.max_actions_per_step = Some(num(&v, &k, s)?),
                        "trigger" => p.trigger_ci = num(&v, &k, s)?,
                        "inspect" => {
                            p.inspect_interval = match v.as_str() {
                                "never" | "none" => None,
                                _ => Some(num(&v, &k, s)?),
                            }
                        }
                        "mix" => {
                            p.repair_mix = match v.split_once(':') {
                                None if v == "minor" => RepairMix::MinorRepair,
                                None if v == "major" => RepairMix::MajorRehab,
                                Some(("below", b)) => RepairMix::RehabBelow(num(b, &k, s)?),
                                _ => return Err(Error::UnknownPolicy(s.to_string())),
                            }
                        }
                        _ => return Err(Error::UnknownPolicy(s.to_string())),
                    }
                }
                greedy_importance_policy(p.clone())?;
                Ok(PolicySpec::Greedy(p))
            }
            _ => Err(Error::UnknownPolicy(s.to_string())),
        }
    }
}

/// Parses a descriptor and builds the policy.
pub fn policy_from_descriptor(descriptor: &str) -> Result<Box<dyn Policy>> {
    descriptor.parse::<PolicySpec>()?.build()
}
