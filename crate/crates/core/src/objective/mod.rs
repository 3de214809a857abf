//! Multi-fidelity stochastic objective, common-random-number seed plans,
//! repetition statistics and the evaluation-cost ledger.

mod functions;
mod ledger;

use rayon::prelude::*;
use thiserror::Error;

use crate::feedback::{
    scalarize, EpisodeRunner, FeedbackError, ObjectiveValues, ThresholdVector, Weights,
};
use crate::seed::{self, Stream};

pub use functions::{NoisySphere, Sphere};
pub use ledger::{CostKind, CostLedger, LedgerSnapshot};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("fidelity must lie in (0, 1], got {0}")]
    Fidelity(f64),
    #[error("at least one seed is required")]
    EmptySeeds,
    #[error("point has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("evaluation cost {spent} N_eq exceeds the abort limit {limit}")]
    BudgetExceeded { spent: f64, limit: f64 },
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
}

/// A noisy cost `J(point; seed)` that can be evaluated at reduced fidelity.
pub trait StochasticObjective: Sync {
    fn dim(&self) -> usize;

    /// Same `(point, seed, fidelity)` must give the same value.
    fn evaluate(&self, point: &[f64], seed: u64, fidelity: f64) -> Result<f64, ObjectiveError>;
}

pub(crate) fn check_fidelity(fidelity: f64) -> Result<(), ObjectiveError> {
    if fidelity > 0.0 && fidelity <= 1.0 {
        Ok(())
    } else {
        Err(ObjectiveError::Fidelity(fidelity))
    }
}

/// Closed-loop ISAC objective: one episode per evaluation, scalarized.
#[derive(Debug, Clone)]
pub struct IsacObjective {
    runner: EpisodeRunner,
    weights: Weights,
}

impl IsacObjective {
    pub fn new(runner: EpisodeRunner, weights: Weights) -> Result<Self, ObjectiveError> {
        weights.validate()?;
        Ok(Self { runner, weights })
    }

    pub fn runner(&self) -> &EpisodeRunner {
        &self.runner
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    /// Raw objective components of one episode.
    pub fn values(
        &self,
        thresholds: &ThresholdVector,
        seed: u64,
        fidelity: f64,
    ) -> Result<ObjectiveValues, ObjectiveError> {
        check_fidelity(fidelity)?;
        let trace = self.runner.run(thresholds, seed, fidelity)?;
        Ok(ObjectiveValues::from_trace(&trace, thresholds))
    }
}

impl StochasticObjective for IsacObjective {
    fn dim(&self) -> usize {
        3
    }

    fn evaluate(&self, point: &[f64], seed: u64, fidelity: f64) -> Result<f64, ObjectiveError> {
        let t = ThresholdVector::from_slice(point)?;
        let v = self.values(&t, seed, fidelity)?;
        Ok(scalarize(&v, &self.weights)?)
    }
}

/// Mean and (when `r >= 2`) unbiased variance of repeated evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepeatedEstimate {
    pub mean: f64,
    pub variance: Option<f64>,
    pub r: usize,
}

impl RepeatedEstimate {
    pub fn from_values(values: &[f64]) -> Result<Self, ObjectiveError> {
        if values.is_empty() {
            return Err(ObjectiveError::EmptySeeds);
        }
        let r = values.len();
        let mean = values.iter().sum::<f64>() / r as f64;
        let variance = (r >= 2)
            .then(|| values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64);
        Ok(Self { mean, variance, r })
    }

    pub fn variance_or(&self, prior: f64) -> f64 {
        self.variance.unwrap_or(prior)
    }
}

/// Stand-in variance for estimates without one: the median of the available
/// variances, or `fallback` when none is available.
pub fn prior_variance(estimates: &[RepeatedEstimate], fallback: f64) -> f64 {
    let mut v: Vec<f64> = estimates.iter().filter_map(|e| e.variance).collect();
    if v.is_empty() {
        return fallback;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Seeds shared by every candidate of one generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrnSeedPlan {
    pub master: u64,
    pub generation: u64,
    pub stage1: u64,
    pub stage2: Vec<u64>,
}

pub fn derive_seed_plan(master: u64, generation: u64, r: usize) -> CrnSeedPlan {
    CrnSeedPlan {
        master,
        generation,
        stage1: seed::child(master, Stream::Stage1, generation, 0),
        stage2: (0..r.max(1) as u64)
            .map(|l| seed::child(master, Stream::Stage2, generation, l))
            .collect(),
    }
}

/// Objective bound to a ledger; every evaluation is charged its fidelity.
pub struct Evaluator<'a, O: StochasticObjective + ?Sized> {
    objective: &'a O,
    ledger: &'a CostLedger,
}

impl<'a, O: StochasticObjective + ?Sized> Evaluator<'a, O> {
    pub fn new(objective: &'a O, ledger: &'a CostLedger) -> Self {
        Self { objective, ledger }
    }

    pub fn objective(&self) -> &O {
        self.objective
    }

    pub fn ledger(&self) -> &CostLedger {
        self.ledger
    }

    pub fn evaluate(
        &self,
        point: &[f64],
        seed: u64,
        fidelity: f64,
        kind: CostKind,
    ) -> Result<f64, ObjectiveError> {
        check_fidelity(fidelity)?;
        if point.len() != self.objective.dim() {
            return Err(ObjectiveError::Dimension {
                expected: self.objective.dim(),
                got: point.len(),
            });
        }
        let value = self.objective.evaluate(point, seed, fidelity)?;
        self.ledger.charge(kind, fidelity);
        Ok(value)
    }

    pub fn evaluate_repeated(
        &self,
        point: &[f64],
        seeds: &[u64],
        fidelity: f64,
        kind: CostKind,
    ) -> Result<RepeatedEstimate, ObjectiveError> {
        if seeds.is_empty() {
            return Err(ObjectiveError::EmptySeeds);
        }
        let values = seeds
            .iter()
            .map(|&s| self.evaluate(point, s, fidelity, kind))
            .collect::<Result<Vec<_>, _>>()?;
        RepeatedEstimate::from_values(&values)
    }

    /// Evaluates every point under one shared seed; results keep input order.
    pub fn evaluate_batch(
        &self,
        points: &[Vec<f64>],
        seed: u64,
        fidelity: f64,
        kind: CostKind,
    ) -> Result<Vec<f64>, ObjectiveError> {
        points
            .par_iter()
            .map(|p| self.evaluate(p, seed, fidelity, kind))
            .collect()
    }

    pub fn evaluate_batch_repeated(
        &self,
        points: &[Vec<f64>],
        seeds: &[u64],
        fidelity: f64,
        kind: CostKind,
    ) -> Result<Vec<RepeatedEstimate>, ObjectiveError> {
        points
            .par_iter()
            .map(|p| self.evaluate_repeated(p, seeds, fidelity, kind))
            .collect()
    }
}
