//! Action pricing and budget accounting.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::model::{Action, ComponentSpec, ComponentState, Step};

/// Repair cost at condition `s`:
/// `((100 - s) / (100 - delta))^alpha * c_m + beta * c_m`.
pub fn repair_cost(s: f64, spec: &ComponentSpec) -> Result<f64> {
    if spec.delta >= 100.0 {
        return Err(Error::Config(ConfigError::new(
            "delta",
            "failure threshold of 100 makes the repair cost undefined",
        )));
    }
    let ratio = (100.0 - s) / (100.0 - spec.delta);
    Ok(ratio.powf(spec.alpha) * spec.c_m + spec.beta * spec.c_m)
}

pub fn action_cost(action: Action, state: &ComponentState, spec: &ComponentSpec) -> Result<f64> {
    match action {
        Action::DoNothing => Ok(0.0),
        Action::Inspect => Ok(spec.c_inspect),
        Action::Repair => repair_cost(state.ci, spec),
        Action::Replace => Ok(spec.c_m),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BudgetModel {
    Fixed {
        amount: f64,
    },
    Cyclic {
        cycle_starts: Vec<Step>,
        cycle_amounts: Vec<f64>,
        #[serde(default)]
        carry_over: bool,
    },
}

impl BudgetModel {
    pub fn fixed(amount: f64) -> Self {
        BudgetModel::Fixed { amount }
    }

    /// Equal allocations every `period` steps over `horizon`.
    pub fn periodic(period: Step, amount: f64, horizon: Step) -> Self {
        let period = period.max(1);
        let cycle_starts: Vec<Step> = (0..horizon.max(1)).step_by(period as usize).collect();
        let cycle_amounts = vec![amount; cycle_starts.len()];
        BudgetModel::Cyclic {
            cycle_starts,
            cycle_amounts,
            carry_over: false,
        }
    }

    pub fn validate(&self, path: &str) -> Result<(), ConfigError> {
        match self {
            BudgetModel::Fixed { amount } => {
                if !(amount.is_finite() && *amount >= 0.0) {
                    return Err(ConfigError::new(format!("{path}.amount"), "must be >= 0"));
                }
            }
            BudgetModel::Cyclic {
                cycle_starts,
                cycle_amounts,
                ..
            } => {
                if cycle_starts.first() != Some(&0) {
                    return Err(ConfigError::new(
                        format!("{path}.cycle_starts"),
                        "must be non-empty and begin at 0",
                    ));
                }
                if cycle_starts.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(ConfigError::new(
                        format!("{path}.cycle_starts"),
                        "must be strictly increasing",
                    ));
                }
                if cycle_amounts.len() != cycle_starts.len() {
                    return Err(ConfigError::new(
                        format!("{path}.cycle_amounts"),
                        "must have one amount per cycle start",
                    ));
                }
                if let Some(j) = cycle_amounts
                    .iter()
                    .position(|a| !(a.is_finite() && *a >= 0.0))
                {
                    return Err(ConfigError::new(
                        format!("{path}.cycle_amounts[{j}]"),
                        "must be >= 0",
                    ));
                }
            }
        }
        Ok(())
    }

    fn cycle_index(&self, t: Step) -> Option<usize> {
        match self {
            BudgetModel::Fixed { .. } => None,
            // Latest start <= t; starts begin at 0 so this is never empty.
            BudgetModel::Cyclic { cycle_starts, .. } => {
                Some(cycle_starts.partition_point(|&s| s <= t).saturating_sub(1))
            }
        }
    }
}

/// Allocation in force at step `t`.
pub fn budget_at(model: &BudgetModel, t: Step) -> f64 {
    match model {
        BudgetModel::Fixed { amount } => *amount,
        BudgetModel::Cyclic { cycle_amounts, .. } => {
            cycle_amounts[model.cycle_index(t).unwrap_or(0)]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetState {
    pub remaining: f64,
    /// Index of the last cycle whose allocation was applied.
    pub current_cycle: Option<usize>,
    pub spent_total: f64,
    pub allocated_total: f64,
}

impl BudgetState {
    /// State before any step: fixed budgets are funded immediately, cyclic
    /// budgets receive their first allocation through [`advance_cycle`].
    pub fn new(model: &BudgetModel) -> Self {
        match model {
            BudgetModel::Fixed { amount } => Self {
                remaining: *amount,
                current_cycle: None,
                spent_total: 0.0,
                allocated_total: *amount,
            },
            BudgetModel::Cyclic { .. } => Self {
                remaining: 0.0,
                current_cycle: None,
                spent_total: 0.0,
                allocated_total: 0.0,
            },
        }
    }

    pub fn utilization_pct(&self) -> f64 {
        if self.allocated_total > 0.0 {
            self.spent_total / self.allocated_total * 100.0
        } else {
            0.0
        }
    }
}

/// Applies the allocation of the cycle starting at `t`, once.
pub fn advance_cycle(state: &BudgetState, model: &BudgetModel, t: Step) -> BudgetState {
    let BudgetModel::Cyclic {
        cycle_starts,
        cycle_amounts,
        carry_over,
    } = model
    else {
        return state.clone();
    };
    let Ok(k) = cycle_starts.binary_search(&t) else {
        return state.clone();
    };
    if state.current_cycle.is_some_and(|c| c >= k) {
        return state.clone();
    }
    let amount = cycle_amounts[k];
    let carried = if *carry_over { state.remaining } else { 0.0 };
    BudgetState {
        remaining: amount + carried,
        current_cycle: Some(k),
        spent_total: state.spent_total,
        allocated_total: state.allocated_total + amount,
    }
}

/// Deducts `amount` if affordable. Returns the new state and whether it was accepted.
pub fn charge(state: &BudgetState, amount: f64) -> Result<(BudgetState, bool)> {
    if !(amount >= 0.0) || !amount.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "charge amount must be a finite non-negative number, got {amount}"
        )));
    }
    if amount <= state.remaining {
        let mut next = state.clone();
        next.remaining -= amount;
        next.spent_total += amount;
        Ok((next, true))
    } else {
        Ok((state.clone(), false))
    }
}
