use rayon::prelude::*;

use super::stats::{fmt_f, fmt_opt, Summary};
use super::{
    csv_text, held_out, initial_thresholds, objective_for, placed_scenario, repetition_seed, run_method, BenchConfig,
    BenchError, Method, OutputFile,
};

/// One method on one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub repetition: usize,
    pub method: Method,
    pub ue_position: [f64; 2],
    pub initial: [f64; 3],
    pub tuned: Option<[f64; 3]>,
    pub j_initial: f64,
    pub j_final: f64,
    /// Held-out `J_det(final) - J_det(initial)`.
    pub delta_j: f64,
    pub n_eq: f64,
    pub failure: Option<String>,
}

impl RunRecord {
    pub fn efficiency(&self) -> f64 {
        self.delta_j / self.n_eq
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: Method,
    pub runs: usize,
    pub failures: usize,
    pub delta_j: Summary,
    pub n_eq: Summary,
    /// Mean improvement over mean cost.
    pub efficiency: f64,
    pub efficiency_half_width: Option<f64>,
}

impl ComparisonRow {
    fn from_runs(method: Method, runs: &[&RunRecord]) -> Self {
        let ok: Vec<&&RunRecord> = runs.iter().filter(|r| r.failure.is_none()).collect();
        let delta_j = Summary::of(&ok.iter().map(|r| r.delta_j).collect::<Vec<_>>());
        let n_eq = Summary::of(&ok.iter().map(|r| r.n_eq).collect::<Vec<_>>());
        Self {
            method,
            runs: runs.len(),
            failures: runs.len() - ok.len(),
            delta_j,
            n_eq,
            efficiency: delta_j.mean / n_eq.mean,
            efficiency_half_width: delta_j.half_width.map(|h| h / n_eq.mean),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub config: BenchConfig,
    pub rows: Vec<ComparisonRow>,
    pub runs: Vec<RunRecord>,
}

impl CompareReport {
    pub fn row(&self, method: Method) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn files(&self) -> Result<Vec<OutputFile>, BenchError> {
        let summary = csv_text(
            &self.config,
            &[
                "method",
                "runs",
                "failures",
                "delta_j",
                "delta_j_ci",
                "n_eq",
                "n_eq_ci",
                "efficiency",
                "efficiency_ci",
            ],
            self.rows.iter().map(|r| {
                vec![
                    r.method.to_string(),
                    r.runs.to_string(),
                    r.failures.to_string(),
                    fmt_f(r.delta_j.mean),
                    r.delta_j.half_width_field(),
                    fmt_f(r.n_eq.mean),
                    r.n_eq.half_width_field(),
                    format!("{:.9}", r.efficiency),
                    fmt_opt(r.efficiency_half_width),
                ]
            }),
        )?;
        let runs = csv_text(
            &self.config,
            &[
                "repetition",
                "method",
                "ue_x",
                "ue_y",
                "t1_initial",
                "t2_initial",
                "t3_initial",
                "t1_final",
                "t2_final",
                "t3_final",
                "j_det_initial",
                "j_det_final",
                "delta_j",
                "n_eq",
                "efficiency",
                "status",
            ],
            self.runs.iter().map(|r| {
                let t = r.tuned.map_or_else(|| vec!["na".to_string(); 3], |t| t.iter().map(|x| fmt_f(*x)).collect());
                let mut row = vec![
                    r.repetition.to_string(),
                    r.method.to_string(),
                    fmt_f(r.ue_position[0]),
                    fmt_f(r.ue_position[1]),
                ];
                row.extend(r.initial.iter().map(|x| fmt_f(*x)));
                row.extend(t);
                row.extend([
                    fmt_f(r.j_initial),
                    fmt_f(r.j_final),
                    fmt_f(r.delta_j),
                    fmt_f(r.n_eq),
                    format!("{:.9}", r.efficiency()),
                    r.failure.clone().unwrap_or_else(|| "ok".into()),
                ]);
                row
            }),
        )?;
        Ok(vec![
            OutputFile {
                name: "compare_summary.csv".into(),
                contents: summary,
            },
            OutputFile {
                name: "compare_runs.csv".into(),
                contents: runs,
            },
        ])
    }
}

fn compare_repetition(cfg: &BenchConfig, r: usize) -> Result<Vec<RunRecord>, BenchError> {
    let scenario = placed_scenario(cfg, r, cfg.scenario.tx_power_dbm);
    let objective = objective_for(cfg, &scenario, cfg.weights)?;
    let initial = initial_thresholds(cfg, r)?;
    let seed = repetition_seed(cfg, r, 0);
    let episodes = cfg.experiment.eval_episodes;
    let j_initial = held_out(&objective, &initial, seed, episodes)?.j_det;

    let mut out = Vec::with_capacity(cfg.experiment.methods.len());
    for &method in &cfg.experiment.methods {
        let mut rec = RunRecord {
            repetition: r,
            method,
            ue_position: scenario.ue_position,
            initial: initial.as_array(),
            tuned: None,
            j_initial,
            j_final: f64::NAN,
            delta_j: f64::NAN,
            n_eq: f64::NAN,
            failure: None,
        };
        match run_method(cfg, method, &objective, &initial, seed) {
            Ok(run) => {
                let j_final = held_out(&objective, &run.thresholds, seed, episodes)?.j_det;
                rec.tuned = Some(run.thresholds.as_array());
                rec.j_final = j_final;
                rec.delta_j = j_final - j_initial;
                rec.n_eq = run.n_eq;
            }
            Err(e) => rec.failure = Some(format!("failed: {e}")),
        }
        out.push(rec);
    }
    Ok(out)
}

/// Every method on every repetition from a shared random start and UE
/// placement, scored on held-out episodes.
pub fn run_compare(cfg: &BenchConfig) -> Result<CompareReport, BenchError> {
    cfg.validate()?;
    let per_rep = (0..cfg.experiment.repetitions)
        .into_par_iter()
        .map(|r| compare_repetition(cfg, r))
        .collect::<Result<Vec<_>, _>>()?;
    let runs: Vec<RunRecord> = per_rep.into_iter().flatten().collect();
    let rows = cfg
        .experiment
        .methods
        .iter()
        .map(|&m| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.method == m).collect();
            ComparisonRow::from_runs(m, &mine)
        })
        .collect();
    Ok(CompareReport {
        config: cfg.clone(),
        rows,
        runs,
    })
}
