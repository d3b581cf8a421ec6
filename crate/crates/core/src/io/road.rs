//! Road networks as delimited text, and their conversion into scenarios.
//!
//! ```text
//! # comments start with '#'
//! version,1
//! V,<vertex id>,<x>,<y>
//! E,<edge id>,<from vertex>,<to vertex>,<length>,<average speed>,<importance>
//! ```

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::economics::BudgetModel;
use crate::error::{Error, Result};
use crate::model::{ComponentSpec, Metadata, Step};
use crate::policy::MAX_ACTIONS_KEY;
use crate::sim::{ScenarioConfig, Termination};

pub const ROAD_FORMAT_VERSION: u32 = 1;

/// The bundled 1024-vertex, 2118-edge sample grid.
pub const SAMPLE_NETWORK: &str = include_str!("../../data/manhattan_sample.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: u64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: u64,
    pub from: u64,
    pub to: u64,
    pub length: f64,
    pub average_speed: f64,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, row: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::RoadNetwork {
        row,
        message: format!("missing column `{name}`"),
    })?;
    raw.trim().parse().map_err(|_| Error::RoadNetwork {
        row,
        message: format!("bad value `{raw}` for `{name}`"),
    })
}

pub fn parse_road_network<R: Read>(source: R) -> Result<RoadNetwork> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(source);
    let mut net = RoadNetwork::default();
    let mut version_seen = false;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::RoadNetwork {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let kind = rec.get(0).unwrap_or("").trim();
        if !version_seen {
            if kind != "version" {
                return Err(Error::RoadNetwork {
                    row,
                    message: "first record must be `version,<n>`".into(),
                });
            }
            let v: u32 = field(&rec, 1, "version", row)?;
            if v > ROAD_FORMAT_VERSION {
                return Err(Error::UnsupportedVersion {
                    found: v,
                    supported: ROAD_FORMAT_VERSION,
                });
            }
            version_seen = true;
            continue;
        }
        let expect_len = |n: usize| {
            if rec.len() == n {
                Ok(())
            } else {
                Err(Error::RoadNetwork {
                    row,
                    message: format!("expected {n} columns, found {}", rec.len()),
                })
            }
        };
        match kind {
            "V" => {
                expect_len(4)?;
                net.vertices.push(Vertex {
                    id: field(&rec, 1, "id", row)?,
                    x: field(&rec, 2, "x", row)?,
                    y: field(&rec, 3, "y", row)?,
                });
            }
            "E" => {
                expect_len(7)?;
                let edge = Edge {
                    id: field(&rec, 1, "id", row)?,
                    from: field(&rec, 2, "from", row)?,
                    to: field(&rec, 3, "to", row)?,
                    length: field(&rec, 4, "length", row)?,
                    average_speed: field(&rec, 5, "average_speed", row)?,
                    importance: field(&rec, 6, "importance", row)?,
                };
                if !(edge.length > 0.0 && edge.length.is_finite()) {
                    return Err(Error::RoadNetwork {
                        row,
                        message: "length must be > 0".into(),
                    });
                }
                if !(edge.average_speed > 0.0 && edge.average_speed.is_finite()) {
                    return Err(Error::RoadNetwork {
                        row,
                        message: "average speed must be > 0".into(),
                    });
                }
                if !(edge.importance >= 0.0) {
                    return Err(Error::RoadNetwork {
                        row,
                        message: "importance must be >= 0".into(),
                    });
                }
                net.edges.push(edge);
            }
            other => {
                return Err(Error::RoadNetwork {
                    row,
                    message: format!("unknown record type `{other}`"),
                })
            }
        }
    }
    if !version_seen {
        return Err(Error::RoadNetwork {
            row: 0,
            message: "empty file".into(),
        });
    }
    let ids: HashSet<u64> = net.vertices.iter().map(|v| v.id).collect();
    if ids.len() != net.vertices.len() {
        return Err(Error::RoadNetwork {
            row: 0,
            message: "duplicate vertex id".into(),
        });
    }
    for e in &net.edges {
        for end in [e.from, e.to] {
            if !ids.contains(&end) {
                return Err(Error::RoadNetwork {
                    row: 0,
                    message: format!("edge {} references unknown vertex {end}", e.id),
                });
            }
        }
    }
    Ok(net)
}

pub fn sample_network() -> RoadNetwork {
    parse_road_network(SAMPLE_NETWORK.as_bytes()).expect("bundled network is valid")
}

pub fn write_road_network(net: &RoadNetwork) -> String {
    let mut out = format!("version,{ROAD_FORMAT_VERSION}\n");
    for v in &net.vertices {
        out.push_str(&format!("V,{},{},{}\n", v.id, v.x, v.y));
    }
    for e in &net.edges {
        out.push_str(&format!(
            "E,{},{},{},{},{},{}\n",
            e.id, e.from, e.to, e.length, e.average_speed, e.importance
        ));
    }
    out
}

/// How edge attributes become component parameters.
///
/// Slower segments carry more stop-and-go traffic and wear faster, so the
/// Weibull scale is linear in speed: `lambda = lambda_base * speed / speed_ref`.
/// Replacement cost is `cost_rate * length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestRule {
    pub lambda_base: f64,
    pub speed_ref: f64,
    pub k: f64,
    pub cost_rate: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c_inspect: f64,
    pub horizon: Step,
    pub budget_period: Step,
    pub budget_per_cycle: f64,
    pub max_actions_per_step: usize,
}

impl Default for IngestRule {
    fn default() -> Self {
        Self {
            lambda_base: 60.0,
            speed_ref: 40.0,
            k: 2.0,
            cost_rate: 5.0,
            delta: 20.0,
            alpha: 1.5,
            beta: 0.1,
            c_inspect: 0.0,
            horizon: 75,
            budget_period: 5,
            budget_per_cycle: 250_000.0,
            max_actions_per_step: 50,
        }
    }
}

/// One component per edge, in ascending edge-id order.
pub fn ingest_road_network(net: &RoadNetwork, rule: &IngestRule) -> Result<ScenarioConfig> {
    if !(rule.speed_ref > 0.0 && rule.lambda_base > 0.0 && rule.cost_rate > 0.0) {
        return Err(Error::InvalidArgument(
            "speed_ref, lambda_base and cost_rate must be > 0".into(),
        ));
    }
    let mut edges: Vec<&Edge> = net.edges.iter().collect();
    edges.sort_by_key(|e| e.id);
    let components = edges
        .iter()
        .map(|e| {
            let mut spec = ComponentSpec::new(
                e.id,
                rule.k,
                rule.lambda_base * (e.average_speed / rule.speed_ref),
                rule.delta,
                rule.cost_rate * e.length,
            );
            spec.alpha = rule.alpha;
            spec.beta = rule.beta;
            spec.c_inspect = rule.c_inspect;
            spec.importance = e.importance;
            spec.metadata = BTreeMap::from([
                ("from".to_string(), e.from.to_string()),
                ("to".to_string(), e.to.to_string()),
                ("length".to_string(), e.length.to_string()),
                ("average_speed".to_string(), e.average_speed.to_string()),
            ]);
            spec
        })
        .collect();
    let mut config = ScenarioConfig::new(
        components,
        BudgetModel::periodic(rule.budget_period, rule.budget_per_cycle, rule.horizon),
    );
    config.name = "road-network".into();
    config.horizon = rule.horizon;
    config.termination = Termination::Horizon;
    config.metadata = Metadata::from([
        (MAX_ACTIONS_KEY.to_string(), rule.max_actions_per_step.to_string()),
        ("vertices".to_string(), net.vertices.len().to_string()),
        ("edges".to_string(), net.edges.len().to_string()),
    ]);
    config.validate()?;
    Ok(config)
}
