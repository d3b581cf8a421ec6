//! Predefined scenarios and the batch benchmark runner.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::DynamicsConfig;
use crate::economics::BudgetModel;
use crate::error::{Error, Result};
use crate::io::scenario::fingerprint;
use crate::model::{ComponentSpec, Hierarchy, HierarchyNode, Metadata, Window};
use crate::policy::{PolicySpec, MAX_ACTIONS_KEY};
use crate::rng::derive_seed;
use crate::sim::{run_episode_outcome, ScenarioConfig, Termination};

pub const PREDEFINED: [&str; 5] = ["simple5", "cyclic", "catastrophic", "intermittent", "largesys"];

pub const LARGESYS_TYPES: usize = 100;
pub const LARGESYS_PER_TYPE: usize = 1000;
pub const LARGESYS_BUDGET: f64 = 20_000_000.0;

/// Weibull and cost parameters for a small environment, one entry per component.
fn small_components(lambdas: &[f64], delta: f64) -> Vec<ComponentSpec> {
    lambdas
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let mut c = ComponentSpec::new(i as u64, 2.0, lambda, delta, 300.0 + 50.0 * i as f64);
            c.alpha = 2.0;
            c.beta = 0.1;
            c.c_inspect = 10.0;
            c
        })
        .collect()
}

fn small_dynamics() -> DynamicsConfig {
    DynamicsConfig {
        k_std: 0.05,
        lambda_std: 3.0,
        age_jitter_std: 0.5,
        ..DynamicsConfig::default()
    }
}

fn named(mut config: ScenarioConfig, name: &str, seed: u64) -> ScenarioConfig {
    config.name = name.to_string();
    config.master_seed = seed;
    config.dynamics = small_dynamics();
    config
}

pub fn simple5(seed: u64) -> ScenarioConfig {
    let comps = small_components(&[45.0, 50.0, 55.0, 60.0, 65.0], 40.0);
    named(ScenarioConfig::new(comps, BudgetModel::fixed(2000.0)), "simple5", seed)
}

pub fn cyclic(seed: u64) -> ScenarioConfig {
    let lambdas: Vec<f64> = (0..8).map(|i| 40.0 + 5.0 * i as f64).collect();
    let budget = BudgetModel::Cyclic {
        cycle_starts: vec![0, 25, 50, 75],
        cycle_amounts: vec![800.0; 4],
        carry_over: false,
    };
    let mut c = named(ScenarioConfig::new(small_components(&lambdas, 30.0), budget), "cyclic", seed);
    c.termination = Termination::Horizon;
    c
}

pub fn catastrophic(seed: u64) -> ScenarioConfig {
    let lambdas: Vec<f64> = (0..8).map(|i| 50.0 + 5.0 * i as f64).collect();
    let mut comps = small_components(&lambdas, 30.0);
    for c in comps.iter_mut().step_by(2) {
        c.catastrophic_hazard = 0.01;
    }
    let mut c = named(ScenarioConfig::new(comps, BudgetModel::fixed(3000.0)), "catastrophic", seed);
    c.termination = Termination::Horizon;
    c
}

pub fn intermittent(seed: u64) -> ScenarioConfig {
    let lambdas: Vec<f64> = (0..8).map(|i| 40.0 + 5.0 * i as f64).collect();
    let mut comps = small_components(&lambdas, 30.0);
    for c in comps.iter_mut().skip(1).step_by(2) {
        c.availability_windows = vec![Window(10, 19), Window(40, 49), Window(70, 79)];
    }
    let mut c = named(ScenarioConfig::new(comps, BudgetModel::fixed(3000.0)), "intermittent", seed);
    c.termination = Termination::Horizon;
    c
}

/// 100 component types of 1000 instances each. Per-type means are drawn from
/// `seed`: `k` in [1.2, 3.0], `lambda` in [20, 120], `c_m` in [50, 5000].
pub fn generate_largesys(seed: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x1a_c6e5]));
    let mut components = Vec::with_capacity(LARGESYS_TYPES * LARGESYS_PER_TYPE);
    let mut nodes = Vec::with_capacity(LARGESYS_TYPES);
    for ty in 0..LARGESYS_TYPES {
        let k = rng.random_range(1.2..=3.0);
        let lambda = rng.random_range(20.0..=120.0);
        let c_m = rng.random_range(50.0..=5000.0);
        let first = (ty * LARGESYS_PER_TYPE) as u64;
        for id in first..first + LARGESYS_PER_TYPE as u64 {
            let mut c = ComponentSpec::new(id, k, lambda, 0.0, c_m);
            c.type_id = ty as u32;
            c.alpha = 2.0;
            c.beta = 0.1;
            c.c_inspect = 0.002 * c_m;
            components.push(c);
        }
        nodes.push(HierarchyNode {
            id: format!("type-{ty:03}"),
            label: format!("Type {ty}"),
            parent: None,
            member_components: (first..first + LARGESYS_PER_TYPE as u64).collect(),
            metadata: Metadata::new(),
        });
    }
    let mut config = ScenarioConfig::new(components, BudgetModel::fixed(LARGESYS_BUDGET));
    config.name = "largesys".into();
    config.master_seed = seed;
    config.termination = Termination::Horizon;
    config.dynamics = DynamicsConfig {
        k_std: 0.1,
        lambda_std: 5.0,
        ..DynamicsConfig::default()
    };
    config.hierarchy = Some(Hierarchy { nodes });
    config.metadata = Metadata::from([(MAX_ACTIONS_KEY.to_string(), "1000".to_string())]);
    config
}

pub fn generate_predefined(name: &str, seed: u64) -> Result<ScenarioConfig> {
    Ok(match name {
        "simple5" => simple5(seed),
        "cyclic" => cyclic(seed),
        "catastrophic" => catastrophic(seed),
        "intermittent" => intermittent(seed),
        "largesys" => generate_largesys(seed),
        _ => {
            return Err(Error::UnknownScenario {
                name: name.to_string(),
                valid: PREDEFINED.iter().map(|s| s.to_string()).collect(),
            })
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub seed: u64,
    pub ettf: f64,
    pub budget_utilization_pct: f64,
    pub replacements_total: usize,
    pub failures_total: usize,
    pub episode_length: u32,
    pub total_return: f64,
    pub spent_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyAggregate("no runs to aggregate".into()));
        }
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
        Ok(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub ettf: Stat,
    pub budget_utilization_pct: Stat,
    pub replacements_total: Stat,
    pub failures_total: Stat,
    pub episode_length: Stat,
    pub total_return: Stat,
}

impl Aggregate {
    pub fn from_runs(runs: &[RunMetrics]) -> Result<Self> {
        let stat = |f: fn(&RunMetrics) -> f64| Stat::of(&runs.iter().map(f).collect::<Vec<_>>());
        Ok(Self {
            ettf: stat(|r| r.ettf)?,
            budget_utilization_pct: stat(|r| r.budget_utilization_pct)?,
            replacements_total: stat(|r| r.replacements_total as f64)?,
            failures_total: stat(|r| r.failures_total as f64)?,
            episode_length: stat(|r| f64::from(r.episode_length))?,
            total_return: stat(|r| r.total_return)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub jobs: usize,
    pub wall_secs: f64,
    pub steps_total: u64,
    pub component_steps_per_sec: f64,
    /// Peak resident set of the process, where the platform reports it.
    pub peak_rss_bytes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scenario: String,
    pub policy: String,
    pub n_components: usize,
    pub horizon: u32,
    pub n_runs: usize,
    pub base_seed: u64,
    /// Hash of the scenario, policy and seeds.
    pub fingerprint: String,
    pub runs: Vec<RunMetrics>,
    pub aggregate: Aggregate,
    pub runtime: RuntimeStats,
}

impl BenchmarkReport {
    /// True when the two reports agree on everything but runtime statistics.
    pub fn same_results(&self, other: &Self) -> bool {
        let strip = |r: &Self| {
            let mut r = r.clone();
            r.runtime = RuntimeStats {
                jobs: 0,
                wall_secs: 0.0,
                steps_total: r.runtime.steps_total,
                component_steps_per_sec: 0.0,
                peak_rss_bytes: None,
            };
            r
        };
        strip(self) == strip(other)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.runs {
            w.serialize(r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario   {} ({} components, H={})", self.scenario, self.n_components, self.horizon);
        let _ = writeln!(out, "policy     {}", self.policy);
        let _ = writeln!(out, "runs       {} (seeds {}..{})", self.n_runs, self.base_seed, self.base_seed + self.n_runs as u64 - 1);
        let _ = writeln!(out, "fingerprint {}", self.fingerprint);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<24} {:>14} {:>14}", "metric", "mean", "std");
        let a = &self.aggregate;
        for (name, s) in [
            ("ettf", a.ettf),
            ("budget_utilization_pct", a.budget_utilization_pct),
            ("replacements_total", a.replacements_total),
            ("failures_total", a.failures_total),
            ("episode_length", a.episode_length),
            ("total_return", a.total_return),
        ] {
            let _ = writeln!(out, "{name:<24} {:>14.4} {:>14.4}", s.mean, s.std);
        }
        let _ = writeln!(out);
        let rt = &self.runtime;
        let _ = writeln!(out, "wall time  {:.3} s with {} job(s)", rt.wall_secs, rt.jobs);
        let _ = writeln!(out, "throughput {:.0} component-steps/s", rt.component_steps_per_sec);
        match rt.peak_rss_bytes {
            Some(b) => {
                let _ = writeln!(out, "peak RSS   {:.1} MiB", b as f64 / (1024.0 * 1024.0));
            }
            None => {
                let _ = writeln!(out, "peak RSS   unavailable");
            }
        }
        out
    }
}

/// Peak resident set size of this process (Linux only).
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn report_fingerprint(config: &ScenarioConfig, policy: &str, n_runs: usize, base_seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(fingerprint(config).as_bytes());
    h.update(format!("\n{policy}\n{n_runs}\n{base_seed}").as_bytes());
    hex::encode(h.finalize())
}

/// Runs seeds `base_seed..base_seed + n_runs` on `jobs` threads. Results do
/// not depend on `jobs`.
pub fn run_benchmark(
    config: &ScenarioConfig,
    policy: &PolicySpec,
    n_runs: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<BenchmarkReport> {
    if n_runs == 0 {
        return Err(Error::InvalidArgument("n_runs must be >= 1".into()));
    }
    if jobs == 0 {
        return Err(Error::InvalidArgument("jobs must be >= 1".into()));
    }
    config.validate()?;
    policy.build()?;
    let config = Arc::new(config.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let started = Instant::now();
    let results: Vec<Result<RunMetrics>> = pool.install(|| {
        (0..n_runs)
            .into_par_iter()
            .map(|run| {
                let seed = base_seed.wrapping_add(run as u64);
                let mut p = policy.build()?;
                let out = run_episode_outcome(Arc::clone(&config), p.as_mut(), seed)
                    .map_err(|e| Error::Run {
                        run,
                        source: Box::new(e),
                    })?;
                let s = out.summary;
                Ok(RunMetrics {
                    run,
                    seed,
                    ettf: s.ettf,
                    budget_utilization_pct: s.budget_utilization_pct,
                    replacements_total: s.replacements_total,
                    failures_total: s.failures_total,
                    episode_length: s.episode_length,
                    total_return: s.total_return,
                    spent_total: s.spent_total,
                })
            })
            .collect()
    });
    let wall_secs = started.elapsed().as_secs_f64();
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let steps_total: u64 = runs.iter().map(|r| u64::from(r.episode_length)).sum();
    let descriptor = policy.to_string();
    Ok(BenchmarkReport {
        scenario: config.name.clone(),
        fingerprint: report_fingerprint(&config, &descriptor, n_runs, base_seed),
        policy: descriptor,
        n_components: config.n_components(),
        horizon: config.horizon,
        n_runs,
        base_seed,
        aggregate: Aggregate::from_runs(&runs)?,
        runs,
        runtime: RuntimeStats {
            jobs,
            wall_secs,
            steps_total,
            component_steps_per_sec: steps_total as f64 * config.n_components() as f64
                / wall_secs.max(1e-9),
            peak_rss_bytes: peak_rss_bytes(),
        },
    })
}
