//! Per-component random substreams.
//!
//! Every component owns independent ChaCha8 streams keyed by
//! `(seed, component index, purpose)`, so results never depend on how
//! components are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Params = 0,
    Dynamics = 1,
    Observation = 2,
}

const PURPOSES: u64 = 4;

/// SplitMix64 finalizer; used to fold several words into one seed.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |acc, p| mix64(acc ^ mix64(*p)))
}

pub fn substream(seed: u64, component: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((component as u64).wrapping_mul(PURPOSES) + purpose as u64);
    rng
}

/// Stateful streams carried by a component for the life of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStreams {
    pub dynamics: ChaCha8Rng,
    pub observation: ChaCha8Rng,
}

impl ComponentStreams {
    pub fn new(seed: u64, component: usize) -> Self {
        Self {
            dynamics: substream(seed, component, Purpose::Dynamics),
            observation: substream(seed, component, Purpose::Observation),
        }
    }
}
