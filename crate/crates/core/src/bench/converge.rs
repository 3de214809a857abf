use std::collections::HashMap;

use rayon::prelude::*;

use super::stats::{fmt_f, Summary};
use super::{
    csv_text, held_out, initial_thresholds, objective_for, placed_scenario, repetition_seed, run_method,
    BenchConfig, BenchError, Method, OutputFile,
};

/// Held-out `J_det` of a method's incumbent after one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePoint {
    pub power_dbm: f64,
    pub method: Method,
    pub repetition: usize,
    pub generation: usize,
    pub j_det: f64,
    pub n_eq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub power_dbm: f64,
    pub method: Method,
    pub generation: usize,
    pub j_det: Summary,
    pub n_eq: Summary,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub config: BenchConfig,
    pub rows: Vec<ConvergenceRow>,
    pub points: Vec<ConvergencePoint>,
}

impl ConvergenceReport {
    pub fn row(&self, power_dbm: f64, method: Method, generation: usize) -> Option<&ConvergenceRow> {
        self.rows
            .iter()
            .find(|r| r.power_dbm == power_dbm && r.method == method && r.generation == generation)
    }

    pub fn files(&self) -> Result<Vec<OutputFile>, BenchError> {
        let summary = csv_text(
            &self.config,
            &["power_dbm", "method", "generation", "j_det", "j_det_ci", "n_eq", "n_eq_ci"],
            self.rows.iter().map(|r| {
                vec![
                    fmt_f(r.power_dbm),
                    r.method.to_string(),
                    r.generation.to_string(),
                    fmt_f(r.j_det.mean),
                    r.j_det.half_width_field(),
                    fmt_f(r.n_eq.mean),
                    r.n_eq.half_width_field(),
                ]
            }),
        )?;
        let runs = csv_text(
            &self.config,
            &["power_dbm", "method", "repetition", "generation", "j_det", "n_eq"],
            self.points.iter().map(|p| {
                vec![
                    fmt_f(p.power_dbm),
                    p.method.to_string(),
                    p.repetition.to_string(),
                    p.generation.to_string(),
                    fmt_f(p.j_det),
                    fmt_f(p.n_eq),
                ]
            }),
        )?;
        Ok(vec![
            OutputFile {
                name: "convergence_summary.csv".into(),
                contents: summary,
            },
            OutputFile {
                name: "convergence_runs.csv".into(),
                contents: runs,
            },
        ])
    }
}

fn trace_run(
    cfg: &BenchConfig,
    pi: usize,
    power: f64,
    method: Method,
    r: usize,
) -> Result<Vec<ConvergencePoint>, BenchError> {
    let scenario = placed_scenario(cfg, r, power);
    let objective = objective_for(cfg, &scenario, cfg.weights)?;
    let initial = initial_thresholds(cfg, r)?;
    let seed = repetition_seed(cfg, r, 100 + pi as u64);
    let run = run_method(cfg, method, &objective, &initial, seed)?;
    let generations = cfg.cma.generations;
    if run.trace.is_empty() {
        return Err(BenchError::Config(format!("{method} produced no generations")));
    }

    let mut cache: HashMap<[u64; 3], f64> = HashMap::new();
    let mut out = Vec::with_capacity(generations);
    for g in 0..generations {
        // a run that stopped early keeps its last incumbent
        let (n_eq, t) = run.trace[g.min(run.trace.len() - 1)];
        let key = t.as_array().map(f64::to_bits);
        let j_det = match cache.get(&key) {
            Some(&v) => v,
            None => {
                let v = held_out(&objective, &t, seed, cfg.experiment.eval_episodes)?.j_det;
                cache.insert(key, v);
                v
            }
        };
        out.push(ConvergencePoint {
            power_dbm: power,
            method,
            repetition: r,
            generation: g + 1,
            j_det,
            n_eq,
        });
    }
    Ok(out)
}

/// Per-generation held-out `J_det` of the CMA-ES and RACE-CMA incumbents at
/// each configured convergence power.
pub fn run_convergence(cfg: &BenchConfig) -> Result<ConvergenceReport, BenchError> {
    cfg.validate()?;
    let methods: Vec<Method> = cfg.experiment.methods.iter().copied().filter(|m| m.is_evolutionary()).collect();
    if methods.is_empty() {
        return Err(BenchError::Config("convergence traces need CMA-ES or RACE-CMA".into()));
    }
    let powers = &cfg.experiment.convergence_powers;
    let reps = cfg.experiment.repetitions;
    let mut jobs = Vec::new();
    for (pi, &p) in powers.iter().enumerate() {
        for &m in &methods {
            for r in 0..reps {
                jobs.push((pi, p, m, r));
            }
        }
    }
    let traces = jobs
        .par_iter()
        .map(|&(pi, p, m, r)| trace_run(cfg, pi, p, m, r))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (block, &(_, p, m, _)) in traces.chunks(reps).zip(jobs.iter().step_by(reps)) {
        for g in 0..cfg.cma.generations {
            let at = |f: &dyn Fn(&ConvergencePoint) -> f64| Summary::of(&block.iter().map(|t| f(&t[g])).collect::<Vec<_>>());
            rows.push(ConvergenceRow {
                power_dbm: p,
                method: m,
                generation: g + 1,
                j_det: at(&|c| c.j_det),
                n_eq: at(&|c| c.n_eq),
            });
        }
    }
    Ok(ConvergenceReport {
        config: cfg.clone(),
        rows,
        points: traces.into_iter().flatten().collect(),
    })
}
