//! Experiment harness: configuration, method comparison, power sweep,
//! convergence traces and the acceptance checks, with CSV reporting.

mod compare;
mod config;
mod converge;
mod stats;
mod sweep;
pub mod validate;

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{ipn_optimize, map_optimize, project, spsa_optimize, BaselineError};
use crate::cma::{cma_optimize, CmaError, CmaOptions, CmaState};
use crate::feedback::{EpisodeRunner, FeedbackError, ThresholdVector, Weights};
use crate::objective::{CostKind, CostLedger, IsacObjective, ObjectiveError, StochasticObjective};
use crate::race::{race_cma_optimize, FeasibleMap, RaceError};
use crate::seed::{self, Stream};
use crate::sim::{ScenarioConfig, SimError};

pub use compare::{run_compare, CompareReport, ComparisonRow, RunRecord};
pub use config::{BenchConfig, CmaSettings, ExperimentSpec, IpnSettings, MapSettings, Method, SpsaSettings};
pub use converge::{run_convergence, ConvergencePoint, ConvergenceReport, ConvergenceRow};
pub use stats::Summary;
pub use sweep::{run_sweep, SweepRecord, SweepReport, SweepRow};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialization error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Cma(#[from] CmaError),
    #[error(transparent)]
    Race(#[from] RaceError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// A named CSV document ready to be written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

pub fn write_outputs(dir: &Path, cfg: &BenchConfig, files: &[OutputFile]) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    for f in files {
        std::fs::write(dir.join(&f.name), &f.contents)?;
    }
    Ok(())
}

pub(crate) fn csv_text(
    cfg: &BenchConfig,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<String, BenchError> {
    let mut out = format!("# config_hash={} seed={}\n", cfg.hash()?, cfg.experiment.master_seed).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(out).expect("csv output is utf-8"))
}

/// Seed of repetition `r` for experiment family `family`.
pub(crate) fn repetition_seed(cfg: &BenchConfig, r: usize, family: u64) -> u64 {
    seed::child(cfg.experiment.master_seed, Stream::Repetition, r as u64, family)
}

/// Random UE position for repetition `r` (shared by every experiment).
pub fn ue_placement(cfg: &BenchConfig, r: usize) -> [f64; 2] {
    let e = &cfg.experiment;
    let mut rng = seed::rng(seed::child(e.master_seed, Stream::Placement, r as u64, 0));
    let x = rng.random_range(e.ue_x_range[0]..=e.ue_x_range[1]);
    let y = rng.random_range(e.ue_y_range[0]..=e.ue_y_range[1]);
    [x, y]
}

/// Uniform draws in the configured RESI interval, sorted and spaced.
pub fn initial_thresholds(cfg: &BenchConfig, r: usize) -> Result<ThresholdVector, BenchError> {
    let e = &cfg.experiment;
    let mut rng = seed::rng(seed::child(e.master_seed, Stream::Placement, r as u64, 1));
    let [lo, hi] = e.initial_resi_range;
    let draw: [f64; 3] = std::array::from_fn(|_| rng.random_range(lo..=hi));
    let t = project(draw, cfg.racing.min_spacing);
    Ok(ThresholdVector::new(t[0], t[1], t[2])?)
}

pub(crate) fn placed_scenario(cfg: &BenchConfig, r: usize, power_dbm: f64) -> ScenarioConfig {
    ScenarioConfig {
        ue_position: ue_placement(cfg, r),
        tx_power_dbm: power_dbm,
        ..cfg.scenario.clone()
    }
}

pub(crate) fn objective_for(
    cfg: &BenchConfig,
    scenario: &ScenarioConfig,
    weights: Weights,
) -> Result<IsacObjective, BenchError> {
    let runner = EpisodeRunner::new(scenario.clone(), scenario.geometry(), cfg.actions.clone())?;
    Ok(IsacObjective::new(runner, weights)?)
}

/// Held-out episode means of the three objective components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldOut {
    pub j_det: f64,
    /// Normalized by the horizon.
    pub j_lat: f64,
    pub j_pow: f64,
}

pub(crate) fn held_out(
    objective: &IsacObjective,
    t: &ThresholdVector,
    seed: u64,
    episodes: usize,
) -> Result<HeldOut, BenchError> {
    let vals = (0..episodes)
        .into_par_iter()
        .map(|e| objective.values(t, seed::child(seed, Stream::Evaluation, e as u64, 0), 1.0))
        .collect::<Result<Vec<_>, _>>()?;
    let n = episodes as f64;
    Ok(HeldOut {
        j_det: vals.iter().map(|v| v.j_det).sum::<f64>() / n,
        j_lat: vals.iter().map(|v| v.normalized_latency()).sum::<f64>() / n,
        j_pow: vals.iter().map(|v| v.j_pow).sum::<f64>() / n,
    })
}

/// Aborts a run once its spending passes `limit`.
struct BudgetGuard<'a, O: ?Sized> {
    inner: &'a O,
    spent: CostLedger,
    limit: f64,
}

impl<O: StochasticObjective + ?Sized> StochasticObjective for BudgetGuard<'_, O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn evaluate(&self, point: &[f64], seed: u64, fidelity: f64) -> Result<f64, ObjectiveError> {
        self.spent.charge(CostKind::Baseline, fidelity);
        let spent = self.spent.total();
        if spent > self.limit {
            return Err(ObjectiveError::BudgetExceeded {
                spent,
                limit: self.limit,
            });
        }
        self.inner.evaluate(point, seed, fidelity)
    }
}

/// Output of one optimizer run.
#[derive(Debug, Clone)]
pub(crate) struct MethodRun {
    pub thresholds: ThresholdVector,
    pub n_eq: f64,
    /// `(n_eq, incumbent)` after each generation; empty for other methods.
    pub trace: Vec<(f64, ThresholdVector)>,
}

pub(crate) fn run_method(
    cfg: &BenchConfig,
    method: Method,
    objective: &IsacObjective,
    initial: &ThresholdVector,
    seed: u64,
) -> Result<MethodRun, BenchError> {
    let limit = 10.0 * cfg.experiment.budget;
    let guard = BudgetGuard {
        inner: objective,
        spent: CostLedger::new(),
        limit,
    };
    let fmap = FeasibleMap::softplus(cfg.racing.min_spacing)?;
    let es_options = CmaOptions {
        budget: cfg.experiment.budget,
        max_generations: Some(cfg.cma.generations),
        min_sigma: 1e-12,
        seed,
    };
    let point = |p: &[f64]| ThresholdVector::from_slice(p);
    let run = match method {
        Method::Map => {
            let mc = cfg.map_config(seed);
            if mc.episodes as f64 > limit {
                return Err(ObjectiveError::BudgetExceeded {
                    spent: mc.episodes as f64,
                    limit,
                }
                .into());
            }
            let out = map_optimize(objective.runner(), initial, &mc)?;
            MethodRun {
                thresholds: out.final_point,
                n_eq: out.ledger.total,
                trace: Vec::new(),
            }
        }
        Method::Ipn => {
            let out = ipn_optimize(&guard, initial, &cfg.ipn_config(seed))?;
            MethodRun {
                thresholds: out.best_point,
                n_eq: out.ledger.total,
                trace: Vec::new(),
            }
        }
        Method::Spsa => {
            let out = spsa_optimize(&guard, initial, &cfg.spsa_config(seed))?;
            MethodRun {
                thresholds: out.best_point,
                n_eq: out.ledger.total,
                trace: Vec::new(),
            }
        }
        Method::CmaEs => {
            let init = CmaState::new(fmap.invert(initial), cfg.cma.sigma0)?;
            let out = cma_optimize(&guard, &fmap, &cfg.cma.params(3)?, init, &es_options)?;
            let trace = out
                .history
                .iter()
                .map(|h| Ok((h.n_eq, fmap.apply(&h.best_u))))
                .collect::<Result<Vec<_>, BenchError>>()?;
            MethodRun {
                thresholds: point(&out.best_point)?,
                n_eq: out.ledger.total,
                trace,
            }
        }
        Method::RaceCma => {
            let init = CmaState::new(fmap.invert(initial), cfg.cma.sigma0)?;
            let out = race_cma_optimize(&guard, &fmap, &cfg.cma.params(3)?, &cfg.racing, init, &es_options)?;
            let trace = out.reports.iter().map(|r| (r.n_eq, fmap.apply(&r.best_u))).collect();
            MethodRun {
                thresholds: point(&out.best_point)?,
                n_eq: out.ledger.total,
                trace,
            }
        }
    };
    Ok(run)
}
