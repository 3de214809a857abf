//! Noisy black-box tuning of ISAC sensing-feedback thresholds.

pub mod baselines;
pub mod bench;
pub mod cma;
pub mod feedback;
pub mod objective;
pub mod race;
pub mod seed;
pub mod sim;
