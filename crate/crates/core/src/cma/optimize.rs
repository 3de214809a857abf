use std::io::Write;

use nalgebra::DVector;

use super::{rank_indices, sample_population, CmaError, CmaParams, CmaState};
use crate::objective::{derive_seed_plan, CostKind, CostLedger, Evaluator, LedgerSnapshot, StochasticObjective};
use crate::seed::{self, Stream};

/// Map from the unconstrained search space to the objective's domain.
pub trait SearchMap: Sync {
    fn map(&self, u: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityMap;

impl SearchMap for IdentityMap {
    fn map(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaOptions {
    /// Evaluation budget in full-evaluation equivalents.
    pub budget: f64,
    /// `None` runs until the budget or step-size floor stops the search.
    pub max_generations: Option<usize>,
    pub min_sigma: f64,
    pub seed: u64,
}

impl Default for CmaOptions {
    fn default() -> Self {
        Self {
            budget: 120.0,
            max_generations: Some(10),
            min_sigma: 1e-12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Best evaluated cost so far.
    pub best_cost: f64,
    /// Mean evaluated cost of this generation's population.
    pub mean_cost: f64,
    pub sigma: f64,
    pub n_eq: f64,
    pub mean: Vec<f64>,
    /// Search point of the best evaluation so far.
    pub best_u: Vec<f64>,
}

pub fn write_history_csv<W: Write>(history: &[GenerationRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["generation", "best_cost", "mean_cost", "sigma", "n_eq"])?;
    for h in history {
        w.write_record([
            h.generation.to_string(),
            format!("{:.9}", h.best_cost),
            format!("{:.9}", h.mean_cost),
            format!("{:.9e}", h.sigma),
            format!("{:.6}", h.n_eq),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CmaOutcome {
    /// Best point in the search space and its image under the map.
    pub best_u: Vec<f64>,
    pub best_point: Vec<f64>,
    pub best_cost: f64,
    pub ledger: LedgerSnapshot,
    pub history: Vec<GenerationRecord>,
    pub state: CmaState,
}

impl CmaOutcome {
    pub fn write_history_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        write_history_csv(&self.history, out)
    }
}

/// Plain CMA-ES: every offspring is evaluated once at full fidelity under
/// the generation's first Stage-2 seed, so candidates share noise.
pub fn cma_optimize<O, M>(
    objective: &O,
    map: &M,
    params: &CmaParams,
    init: CmaState,
    options: &CmaOptions,
) -> Result<CmaOutcome, CmaError>
where
    O: StochasticObjective + ?Sized,
    M: SearchMap + ?Sized,
{
    if !(options.budget > 0.0) {
        return Err(CmaError::Params("budget must be positive".into()));
    }
    if init.dim() != params.n {
        return Err(CmaError::Params("initial mean does not match parameter dimension".into()));
    }
    let ledger = CostLedger::new();
    let eval = Evaluator::new(objective, &ledger);
    let mut state = init;
    let mut history = Vec::new();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;

    loop {
        let g = state.generation();
        if options.max_generations.is_some_and(|cap| g >= cap)
            || state.sigma() < options.min_sigma
            || !ledger.fits(params.lambda as f64, options.budget)
        {
            break;
        }
        let pop = sample_population(&state, params.lambda, seed::child(options.seed, Stream::Sampling, g as u64, 0));
        let us: Vec<Vec<f64>> = pop.iter().map(|s| s.u.as_slice().to_vec()).collect();
        let points: Vec<Vec<f64>> = us.iter().map(|u| map.map(u)).collect();
        let plan = derive_seed_plan(options.seed, g as u64, 1);
        let costs = eval.evaluate_batch(&points, plan.stage2[0], 1.0, CostKind::Stage2)?;

        let order = rank_indices(&costs);
        if best.as_ref().is_none_or(|b| costs[order[0]] < b.0) {
            best = Some((costs[order[0]], us[order[0]].clone(), points[order[0]].clone()));
        }
        let elites: Vec<DVector<f64>> = order[..params.mu].iter().map(|&i| pop[i].u.clone()).collect();
        state = state.update(params, &elites, &params.weights, false)?;

        history.push(GenerationRecord {
            generation: g + 1,
            best_cost: best.as_ref().map_or(f64::NAN, |b| b.0),
            mean_cost: costs.iter().sum::<f64>() / costs.len() as f64,
            sigma: state.sigma(),
            n_eq: ledger.total(),
            mean: state.mean().as_slice().to_vec(),
            best_u: best.as_ref().map_or_else(Vec::new, |b| b.1.clone()),
        });
    }

    let (best_cost, best_u, best_point) = match best {
        Some(b) => b,
        None => {
            let u = state.mean().as_slice().to_vec();
            let p = map.map(&u);
            (f64::NAN, u, p)
        }
    };
    Ok(CmaOutcome {
        best_u,
        best_point,
        best_cost,
        ledger: ledger.snapshot(),
        history,
        state,
    })
}
