//! Simulation of infrastructure fleets under partial observability and
//! budget constraints.

pub mod bench;
pub mod dynamics;
pub mod economics;
pub mod error;
pub mod io;
pub mod model;
pub mod policy;
pub mod rng;
pub mod sim;

pub use error::{ConfigError, Error, Result};
pub use model::{Action, ComponentSpec, ComponentState, Step};
pub use policy::{policy_from_descriptor, Policy, PolicySpec};
pub use sim::{Env, Observation, ScenarioConfig, StepResult};
