//! Comparison optimizers: MAP threshold placement, log-barrier interior
//! point Newton and SPSA.

mod ipn;
mod map_rule;
mod spsa;

use std::io::Write;

use thiserror::Error;

use crate::feedback::{FeedbackError, ThresholdVector};
use crate::objective::{LedgerSnapshot, ObjectiveError};

pub use ipn::{ipn_optimize, log_barrier, IpnConfig};
pub use map_rule::{
    labelled_samples, map_optimize, map_thresholds, posterior_crossing, Gaussian, HypothesisDensityModel, MapConfig,
    MIN_SAMPLES,
};
pub use spsa::{project, spsa_gradient, spsa_optimize, SpsaConfig, SpsaSchedule};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cost observed at this iteration (NaN when none was measured).
    pub cost: f64,
    pub thresholds: [f64; 3],
    pub n_eq: f64,
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub best_point: ThresholdVector,
    pub best_cost: f64,
    pub final_point: ThresholdVector,
    pub ledger: LedgerSnapshot,
    pub history: Vec<IterationRecord>,
}

impl BaselineOutcome {
    pub fn write_history_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "cost", "t1", "t2", "t3", "n_eq"])?;
        for r in &self.history {
            w.write_record([
                r.iteration.to_string(),
                format!("{:.9}", r.cost),
                format!("{:.6}", r.thresholds[0]),
                format!("{:.6}", r.thresholds[1]),
                format!("{:.6}", r.thresholds[2]),
                format!("{:.6}", r.n_eq),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
