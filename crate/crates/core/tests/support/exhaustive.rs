//! Two components, three steps: a standalone reference model of the
//! environment, evaluated over every one of the 4^6 action sequences.

use std::sync::Arc;

use infrasim::economics::BudgetModel;
use infrasim::model::{decode_action_index, ComponentSpec};
use infrasim::sim::{Env, ScenarioConfig, Termination};

pub const H: usize = 3;

struct Part {
    k: f64,
    lambda: f64,
    delta: f64,
    c_m: f64,
    alpha: f64,
    beta: f64,
    c_inspect: f64,
}

const PARTS: [Part; 2] = [
    Part { k: 2.0, lambda: 3.0, delta: 40.0, c_m: 50.0, alpha: 2.0, beta: 0.1, c_inspect: 5.0 },
    Part { k: 1.5, lambda: 4.0, delta: 30.0, c_m: 60.0, alpha: 1.5, beta: 0.2, c_inspect: 4.0 },
];
const BUDGET: f64 = 120.0;
const REPAIR_GAIN: f64 = 30.0;
const PENALTY: f64 = 10.0;

pub fn scenario() -> ScenarioConfig {
    let components = PARTS
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut c = ComponentSpec::new(i as u64, p.k, p.lambda, p.delta, p.c_m);
            c.alpha = p.alpha;
            c.beta = p.beta;
            c.c_inspect = p.c_inspect;
            c
        })
        .collect();
    let mut cfg = ScenarioConfig::new(components, BudgetModel::fixed(BUDGET));
    cfg.horizon = H as u32;
    cfg.termination = Termination::Horizon;
    cfg
}

/// Reference model: latent age per component, CI on the Weibull survival
/// curve, sequential charging against one budget.
pub fn reference_return(plan: &[[u8; 2]; H]) -> f64 {
    let mut age = [0.0f64; 2];
    let mut ci = [100.0f64; 2];
    let mut remaining = BUDGET;
    let mut total = 0.0;
    for step in plan {
        let mut replaced = [false; 2];
        for (i, &code) in step.iter().enumerate() {
            let p = &PARTS[i];
            let cost = match code {
                0 => continue,
                1 => p.c_inspect,
                2 => ((100.0 - ci[i]) / (100.0 - p.delta)).powf(p.alpha) * p.c_m + p.beta * p.c_m,
                _ => p.c_m,
            };
            if cost > remaining {
                continue;
            }
            remaining -= cost;
            match code {
                2 => {
                    ci[i] = (ci[i] + REPAIR_GAIN).min(100.0);
                    age[i] = if ci[i] == 100.0 {
                        0.0
                    } else {
                        p.lambda * (-(ci[i] / 100.0).ln()).powf(1.0 / p.k)
                    };
                }
                3 => {
                    age[i] = 0.0;
                    ci[i] = 100.0;
                    replaced[i] = true;
                }
                _ => {}
            }
        }
        let mut margin = 0i64;
        let mut failing = 0i64;
        for i in 0..2 {
            let p = &PARTS[i];
            if !replaced[i] {
                age[i] += 1.0;
                ci[i] = 100.0 * (-(age[i] / p.lambda).powf(p.k)).exp();
            }
            let shown = ci[i].floor() as i64;
            margin += shown - p.delta as i64;
            if shown <= p.delta as i64 {
                failing += 1;
            }
        }
        total += margin as f64 / 200.0 - PENALTY * failing as f64;
    }
    total
}

pub fn plan_of(index: u64) -> [[u8; 2]; H] {
    let mut plan = [[0u8; 2]; H];
    let mut rest = index;
    for step in plan.iter_mut() {
        for slot in step.iter_mut() {
            *slot = (rest % 4) as u8;
            rest /= 4;
        }
    }
    plan
}

pub fn simulated_return(config: &Arc<ScenarioConfig>, plan: &[[u8; 2]; H]) -> f64 {
    let (mut env, _) = Env::reset(Arc::clone(config), 0).unwrap();
    let mut total = 0.0;
    for step in plan {
        let code = u64::from(step[0]) + 4 * u64::from(step[1]);
        let actions = decode_action_index(code, 2).unwrap();
        total += env.step(&actions).unwrap().reward;
    }
    assert!(env.is_done());
    total
}

pub struct Comparison {
    pub plans: u64,
    pub mismatches: Vec<(u64, f64, f64)>,
    pub best_reference: (f64, u64),
    pub best_simulated: (f64, u64),
}

/// Evaluates every plan under both models.
pub fn compare_all() -> Comparison {
    let config = Arc::new(scenario());
    let plans = 4u64.pow((2 * H) as u32);
    let mut out = Comparison {
        plans,
        mismatches: Vec::new(),
        best_reference: (f64::NEG_INFINITY, 0),
        best_simulated: (f64::NEG_INFINITY, 0),
    };
    for index in 0..plans {
        let plan = plan_of(index);
        let expected = reference_return(&plan);
        let got = simulated_return(&config, &plan);
        if got.to_bits() != expected.to_bits() {
            out.mismatches.push((index, got, expected));
        }
        if expected > out.best_reference.0 {
            out.best_reference = (expected, index);
        }
        if got > out.best_simulated.0 {
            out.best_simulated = (got, index);
        }
    }
    out
}
