//! Domain types shared across the simulator: actions, component parameters
//! and latent state, plus the grouping hierarchy used for reporting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};

/// Free-form key/value annotations. `BTreeMap` keeps serialization canonical.
pub type Metadata = BTreeMap<String, String>;

/// Time step index.
pub type Step = u32;

/// Observation code for "never observed since reset".
pub const NO_OBSERVATION: u8 = 101;

/// Upper bound on the steps-since-inspection counter.
pub const MAX_SINCE_INSPECTION: u8 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
#[repr(u8)]
pub enum Action {
    #[default]
    DoNothing = 0,
    Inspect = 1,
    Repair = 2,
    Replace = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [
        Action::DoNothing,
        Action::Inspect,
        Action::Repair,
        Action::Replace,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Action::DoNothing),
            1 => Ok(Action::Inspect),
            2 => Ok(Action::Repair),
            3 => Ok(Action::Replace),
            other => Err(Error::InvalidArgument(format!(
                "action code {other} is not one of 0..=3"
            ))),
        }
    }

    pub fn is_maintenance(self) -> bool {
        matches!(self, Action::Repair | Action::Replace)
    }
}

impl TryFrom<u8> for Action {
    type Error = Error;

    fn try_from(code: u8) -> Result<Self> {
        Action::from_code(code)
    }
}

impl From<Action> for u8 {
    fn from(action: Action) -> u8 {
        action.code()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Action::DoNothing => "do-nothing",
            Action::Inspect => "inspect",
            Action::Repair => "repair",
            Action::Replace => "replace",
        };
        f.write_str(name)
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "0" | "do-nothing" | "donothing" | "none" => Ok(Action::DoNothing),
            "1" | "inspect" => Ok(Action::Inspect),
            "2" | "repair" => Ok(Action::Repair),
            "3" | "replace" => Ok(Action::Replace),
            other => Err(Error::InvalidArgument(format!("unknown action `{other}`"))),
        }
    }
}

/// Packs one action per component into a single base-4 index, component 0
/// being the least-significant digit.
pub fn encode_action_index(actions: &[Action], n: usize) -> Result<u64> {
    if actions.len() != n {
        return Err(Error::InvalidArgument(format!(
            "expected {n} actions, got {}",
            actions.len()
        )));
    }
    if n > 31 {
        return Err(Error::InvalidArgument(format!(
            "{n} components do not fit a 64-bit action index"
        )));
    }
    Ok(actions
        .iter()
        .rev()
        .fold(0u64, |acc, a| acc * 4 + u64::from(a.code())))
}

pub fn decode_action_index(index: u64, n: usize) -> Result<Vec<Action>> {
    if n > 31 {
        return Err(Error::InvalidArgument(format!(
            "{n} components do not fit a 64-bit action index"
        )));
    }
    let size = 1u64 << (2 * n);
    if index >= size {
        return Err(Error::InvalidArgument(format!(
            "action index {index} out of range for {n} components (size {size})"
        )));
    }
    let mut rest = index;
    Ok((0..n)
        .map(|_| {
            let code = (rest % 4) as u8;
            rest /= 4;
            Action::ALL[code as usize]
        })
        .collect())
}

/// Closed step interval `[start, end]` during which maintenance is forbidden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window(pub Step, pub Step);

impl Window {
    pub fn contains(&self, t: Step) -> bool {
        self.0 <= t && t <= self.1
    }
}

fn default_importance() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    1.0
}

/// Static parameters of one component instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub id: u64,
    #[serde(default)]
    pub type_id: u32,
    /// Weibull shape (mean of the per-instance draw).
    pub k: f64,
    /// Weibull scale in steps (mean of the per-instance draw).
    pub lambda: f64,
    /// Failure threshold on the condition index.
    pub delta: f64,
    /// Replacement cost.
    pub c_m: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub c_inspect: f64,
    #[serde(default = "default_importance")]
    pub importance: f64,
    #[serde(default)]
    pub availability_windows: Vec<Window>,
    #[serde(default)]
    pub catastrophic_hazard: f64,
    #[serde(default)]
    pub metadata: Metadata,
}

impl ComponentSpec {
    /// A component with the given Weibull parameters and otherwise neutral defaults.
    pub fn new(id: u64, k: f64, lambda: f64, delta: f64, c_m: f64) -> Self {
        Self {
            id,
            type_id: 0,
            k,
            lambda,
            delta,
            c_m,
            alpha: default_alpha(),
            beta: 0.0,
            c_inspect: 0.0,
            importance: default_importance(),
            availability_windows: Vec::new(),
            catastrophic_hazard: 0.0,
            metadata: Metadata::new(),
        }
    }

    pub fn validate(&self, path: &str) -> Result<(), ConfigError> {
        let field = |name: &str| format!("{path}.{name}");
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::new(field(name), format!("must be > 0, got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ConfigError::new(field(name), format!("must be >= 0, got {v}")))
            }
        };
        positive("k", self.k)?;
        positive("lambda", self.lambda)?;
        positive("c_m", self.c_m)?;
        positive("alpha", self.alpha)?;
        non_negative("beta", self.beta)?;
        non_negative("c_inspect", self.c_inspect)?;
        non_negative("importance", self.importance)?;
        if !(self.delta.is_finite() && (0.0..100.0).contains(&self.delta)) {
            return Err(ConfigError::new(
                field("delta"),
                format!("must lie in [0, 100), got {}", self.delta),
            ));
        }
        if !(0.0..=1.0).contains(&self.catastrophic_hazard) {
            return Err(ConfigError::new(
                field("catastrophic_hazard"),
                format!("must lie in [0, 1], got {}", self.catastrophic_hazard),
            ));
        }
        let mut prev_end: Option<Step> = None;
        for (j, w) in self.availability_windows.iter().enumerate() {
            let wpath = format!("{path}.availability_windows[{j}]");
            if w.0 > w.1 {
                return Err(ConfigError::new(wpath, "start must not exceed end"));
            }
            if let Some(end) = prev_end {
                if w.0 <= end {
                    return Err(ConfigError::new(
                        wpath,
                        "windows must be sorted and disjoint",
                    ));
                }
            }
            prev_end = Some(w.1);
        }
        Ok(())
    }
}

/// Latent dynamic state of one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentState {
    /// Effective age in steps; drives the Weibull curve.
    pub age: f64,
    /// Continuous condition index in `[0, 100]`.
    pub ci: f64,
    /// Hard (catastrophic) failure. Absorbing until replaced.
    pub failed: bool,
    /// Last observed CI, or [`NO_OBSERVATION`].
    pub last_obs: u8,
    pub steps_since_inspection: u8,
}

impl ComponentState {
    pub fn pristine() -> Self {
        Self {
            age: 0.0,
            ci: 100.0,
            failed: false,
            last_obs: NO_OBSERVATION,
            steps_since_inspection: 0,
        }
    }

    /// Integer CI as reported to users and used for failure accounting.
    pub fn reported_ci(&self) -> f64 {
        self.ci.floor()
    }

    /// True when the component is hard-failed or its reported CI is at or below `delta`.
    pub fn is_failing(&self, delta: f64) -> bool {
        self.failed || self.reported_ci() <= delta
    }
}

impl Default for ComponentState {
    fn default() -> Self {
        Self::pristine()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyNode {
    pub id: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub parent: Option<String>,
    /// Component ids; only meaningful on leaf groups.
    #[serde(default)]
    pub member_components: Vec<u64>,
    #[serde(default)]
    pub metadata: Metadata,
}

/// Grouping of components into units and facilities. Forest-shaped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hierarchy {
    pub nodes: Vec<HierarchyNode>,
}

impl Hierarchy {
    pub fn node(&self, id: &str) -> Option<&HierarchyNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn is_leaf(&self, id: &str) -> bool {
        !self
            .nodes
            .iter()
            .any(|n| n.parent.as_deref() == Some(id))
    }

    pub fn leaves(&self) -> impl Iterator<Item = &HierarchyNode> {
        self.nodes.iter().filter(|n| self.is_leaf(&n.id))
    }

    /// Checks the forest shape and that each component sits in exactly one leaf.
    pub fn validate(&self, component_ids: &[u64], path: &str) -> Result<(), ConfigError> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if index.insert(node.id.as_str(), i).is_some() {
                return Err(ConfigError::new(
                    format!("{path}[{i}].id"),
                    format!("duplicate node id `{}`", node.id),
                ));
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(parent) = &node.parent {
                if !index.contains_key(parent.as_str()) {
                    return Err(ConfigError::new(
                        format!("{path}[{i}].parent"),
                        format!("unknown parent `{parent}`"),
                    ));
                }
            }
            // Walk to the root; a walk longer than the node count means a cycle.
            let mut cursor = node.parent.as_deref();
            let mut hops = 0;
            while let Some(p) = cursor {
                hops += 1;
                if hops > self.nodes.len() {
                    return Err(ConfigError::new(
                        format!("{path}[{i}].parent"),
                        "hierarchy contains a cycle",
                    ));
                }
                cursor = self.nodes[index[p]].parent.as_deref();
            }
        }

        let known: HashSet<u64> = component_ids.iter().copied().collect();
        let mut owner: HashMap<u64, &str> = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.member_components.is_empty() {
                continue;
            }
            if !self.is_leaf(&node.id) {
                return Err(ConfigError::new(
                    format!("{path}[{i}].member_components"),
                    "only leaf groups may list components",
                ));
            }
            for c in &node.member_components {
                if !known.contains(c) {
                    return Err(ConfigError::new(
                        format!("{path}[{i}].member_components"),
                        format!("unknown component id {c}"),
                    ));
                }
                if let Some(prev) = owner.insert(*c, node.id.as_str()) {
                    return Err(ConfigError::new(
                        format!("{path}[{i}].member_components"),
                        format!("component {c} already belongs to `{prev}`"),
                    ));
                }
            }
        }
        if let Some(missing) = component_ids.iter().find(|c| !owner.contains_key(c)) {
            return Err(ConfigError::new(
                path.to_string(),
                format!("component {missing} belongs to no leaf group"),
            ));
        }
        Ok(())
    }
}

/// Mean continuous CI over a node's members. For an inner node, members of
/// all descendant leaves are included.
pub fn aggregate_ci(
    states: &[ComponentState],
    component_ids: &[u64],
    hierarchy: &Hierarchy,
    node_id: &str,
) -> Result<f64> {
    let position: HashMap<u64, usize> = component_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (*id, i))
        .collect();
    let mut members = Vec::new();
    let mut stack = vec![node_id];
    if hierarchy.node(node_id).is_none() {
        return Err(Error::InvalidArgument(format!("unknown group `{node_id}`")));
    }
    while let Some(id) = stack.pop() {
        if let Some(node) = hierarchy.node(id) {
            members.extend(node.member_components.iter().copied());
        }
        stack.extend(
            hierarchy
                .nodes
                .iter()
                .filter(|n| n.parent.as_deref() == Some(id))
                .map(|n| n.id.as_str()),
        );
    }
    if members.is_empty() {
        return Err(Error::EmptyAggregate(node_id.to_string()));
    }
    let mut sum = 0.0;
    for c in &members {
        let i = position.get(c).ok_or_else(|| {
            Error::InvalidArgument(format!("group `{node_id}` names unknown component {c}"))
        })?;
        sum += states
            .get(*i)
            .ok_or_else(|| Error::InvalidArgument(format!("no state for component {c}")))?
            .ci;
    }
    Ok(sum / members.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use Action::*;

    #[test]
    fn encode_examples() {
        assert_eq!(encode_action_index(&[DoNothing; 5], 5).unwrap(), 0);
        assert_eq!(encode_action_index(&[Inspect, DoNothing], 2).unwrap(), 1);
        assert_eq!(encode_action_index(&[Replace, Repair], 2).unwrap(), 11);
    }

    #[test]
    fn encode_length_mismatch() {
        assert!(matches!(
            encode_action_index(&[Inspect], 2),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_action_index(0, 3).unwrap(), vec![DoNothing; 3]);
        assert_eq!(decode_action_index(11, 2).unwrap(), vec![Replace, Repair]);
        assert_eq!(decode_action_index(15, 2).unwrap(), vec![Replace, Replace]);
        assert!(decode_action_index(16, 2).is_err());
    }

    #[test]
    fn decode_encode_exhaustive_small() {
        for n in 0..=4usize {
            for index in 0..(1u64 << (2 * n)) {
                let actions = decode_action_index(index, n).unwrap();
                assert_eq!(encode_action_index(&actions, n).unwrap(), index);
            }
        }
    }

    proptest! {
        #[test]
        fn decode_encode_roundtrip(n in 1usize..=8, raw in any::<u64>()) {
            let index = raw % (1u64 << (2 * n));
            let actions = decode_action_index(index, n).unwrap();
            prop_assert_eq!(encode_action_index(&actions, n).unwrap(), index);
        }
    }

    #[test]
    fn action_codes_serialize_as_integers() {
        let json = serde_json::to_string(&vec![DoNothing, Inspect, Repair, Replace]).unwrap();
        assert_eq!(json, "[0,1,2,3]");
        assert!(serde_json::from_str::<Action>("4").is_err());
    }

    fn spec() -> ComponentSpec {
        ComponentSpec::new(0, 2.0, 50.0, 40.0, 1000.0)
    }

    #[test]
    fn spec_validation_rejects_each_bound() {
        assert!(spec().validate("c").is_ok());
        let cases: Vec<(&str, Box<dyn Fn(&mut ComponentSpec)>)> = vec![
            ("k", Box::new(|s| s.k = 0.0)),
            ("lambda", Box::new(|s| s.lambda = -1.0)),
            ("c_m", Box::new(|s| s.c_m = 0.0)),
            ("alpha", Box::new(|s| s.alpha = 0.0)),
            ("beta", Box::new(|s| s.beta = -0.1)),
            ("c_inspect", Box::new(|s| s.c_inspect = -1.0)),
            ("importance", Box::new(|s| s.importance = -1.0)),
            ("delta", Box::new(|s| s.delta = 100.0)),
            ("delta", Box::new(|s| s.delta = -1.0)),
            ("catastrophic_hazard", Box::new(|s| s.catastrophic_hazard = 1.5)),
            (
                "availability_windows[0]",
                Box::new(|s| s.availability_windows = vec![Window(5, 2)]),
            ),
            (
                "availability_windows[1]",
                Box::new(|s| s.availability_windows = vec![Window(0, 5), Window(5, 9)]),
            ),
        ];
        for (field, mutate) in cases {
            let mut s = spec();
            mutate(&mut s);
            let err = s.validate("components[0]").unwrap_err();
            assert_eq!(err.path, format!("components[0].{field}"));
        }
    }

    fn two_level() -> Hierarchy {
        let node = |id: &str, parent: Option<&str>, members: Vec<u64>| HierarchyNode {
            id: id.into(),
            label: id.into(),
            parent: parent.map(Into::into),
            member_components: members,
            metadata: Metadata::new(),
        };
        Hierarchy {
            nodes: vec![
                node("site", None, vec![]),
                node("a", Some("site"), vec![0, 1]),
                node("b", Some("site"), vec![2]),
            ],
        }
    }

    fn with_ci(cis: &[f64]) -> Vec<ComponentState> {
        cis.iter()
            .map(|&ci| ComponentState {
                ci,
                ..ComponentState::pristine()
            })
            .collect()
    }

    #[test]
    fn aggregate_means() {
        let h = two_level();
        let ids = [0, 1, 2];
        assert_eq!(aggregate_ci(&with_ci(&[100.0, 100.0, 0.0]), &ids, &h, "a").unwrap(), 100.0);
        assert_eq!(aggregate_ci(&with_ci(&[100.0, 50.0, 0.0]), &ids, &h, "a").unwrap(), 75.0);
        assert_eq!(aggregate_ci(&with_ci(&[80.0, 60.0, 40.0]), &ids, &h, "site").unwrap(), 60.0);
    }

    #[test]
    fn aggregate_empty_group() {
        let mut h = two_level();
        h.nodes.push(HierarchyNode {
            id: "empty".into(),
            label: String::new(),
            parent: None,
            member_components: vec![],
            metadata: Metadata::new(),
        });
        let err = aggregate_ci(&with_ci(&[1.0, 2.0, 3.0]), &[0, 1, 2], &h, "empty").unwrap_err();
        assert!(matches!(err, Error::EmptyAggregate(_)));
    }

    #[test]
    fn hierarchy_validation() {
        let h = two_level();
        assert!(h.validate(&[0, 1, 2], "hierarchy").is_ok());
        // component 3 has no group
        assert!(h.validate(&[0, 1, 2, 3], "hierarchy").is_err());

        let mut dup = two_level();
        dup.nodes[2].member_components.push(1);
        assert!(dup.validate(&[0, 1, 2], "hierarchy").is_err());

        let mut cyclic = two_level();
        cyclic.nodes[0].parent = Some("a".into());
        let err = cyclic.validate(&[0, 1, 2], "hierarchy").unwrap_err();
        assert!(err.message.contains("cycle"));

        let mut inner = two_level();
        inner.nodes[0].member_components.push(2);
        inner.nodes[2].member_components.clear();
        assert!(inner.validate(&[0, 1, 2], "hierarchy").is_err());
    }
}
