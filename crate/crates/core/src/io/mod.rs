//! File formats: scenarios, episode logs and road networks.

pub mod log;
pub mod road;
pub mod scenario;
