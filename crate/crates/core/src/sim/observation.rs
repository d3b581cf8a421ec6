use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::{MAX_SINCE_INSPECTION, NO_OBSERVATION};

/// Agent-facing view of the environment.
///
/// Flattened it is `[o_1 .. o_n, budget, tau_1 .. tau_n]`, length `2n + 1`,
/// and that flat form is also its serialized form.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Last observed CI per component; 101 when never observed.
    pub last_obs: Vec<u8>,
    pub budget: f64,
    /// Steps since last inspection, saturating at 100.
    pub since_inspection: Vec<u8>,
}

impl Observation {
    pub fn len(&self) -> usize {
        2 * self.last_obs.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_components(&self) -> usize {
        self.last_obs.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend(self.last_obs.iter().map(|&o| f64::from(o)));
        out.push(self.budget);
        out.extend(self.since_inspection.iter().map(|&t| f64::from(t)));
        out
    }

    pub fn from_flat(values: &[f64]) -> Result<Self, String> {
        if values.len() % 2 == 0 {
            return Err(format!(
                "observation length {} is not of the form 2n+1",
                values.len()
            ));
        }
        let n = values.len() / 2;
        let small = |v: f64, max: u8, what: &str| -> Result<u8, String> {
            if v.fract() == 0.0 && (0.0..=f64::from(max)).contains(&v) {
                Ok(v as u8)
            } else {
                Err(format!("{what} entry {v} outside 0..={max}"))
            }
        };
        let last_obs = values[..n]
            .iter()
            .map(|&v| small(v, NO_OBSERVATION, "observation"))
            .collect::<Result<_, _>>()?;
        let since_inspection = values[n + 1..]
            .iter()
            .map(|&v| small(v, MAX_SINCE_INSPECTION, "since-inspection"))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            last_obs,
            budget: values[n],
            since_inspection,
        })
    }
}

#[derive(Serialize)]
#[serde(untagged)]
enum Entry {
    Int(u8),
    Real(f64),
}

impl Serialize for Observation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = serializer.serialize_seq(Some(self.len()))?;
        for &o in &self.last_obs {
            seq.serialize_element(&Entry::Int(o))?;
        }
        seq.serialize_element(&Entry::Real(self.budget))?;
        for &t in &self.since_inspection {
            seq.serialize_element(&Entry::Int(t))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Observation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        Observation::from_flat(&values).map_err(D::Error::custom)
    }
}
