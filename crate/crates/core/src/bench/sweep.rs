use rayon::prelude::*;

use super::stats::{fmt_f, Summary};
use super::{
    csv_text, held_out, initial_thresholds, objective_for, placed_scenario, repetition_seed, run_method, BenchConfig, BenchError,
    HeldOut, Method, OutputFile,
};
use crate::feedback::ThresholdVector;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub power_dbm: f64,
    pub repetition: usize,
    pub fixed: HeldOut,
    pub tuned: Option<HeldOut>,
    pub tuned_thresholds: Option<[f64; 3]>,
    pub n_eq: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub power_dbm: f64,
    pub runs: usize,
    pub failures: usize,
    pub j_det_fixed: Summary,
    pub j_det_tuned: Summary,
    pub j_lat_fixed: Summary,
    pub j_lat_tuned: Summary,
    /// `1 - mean tuned latency / mean fixed latency`.
    pub latency_reduction: f64,
    /// Sensing share of the power budget; communication gets the rest.
    pub sensing_fixed: Summary,
    pub sensing_tuned: Summary,
    pub n_eq: Summary,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub config: BenchConfig,
    pub rows: Vec<SweepRow>,
    pub records: Vec<SweepRecord>,
}

impl SweepReport {
    pub fn files(&self) -> Result<Vec<OutputFile>, BenchError> {
        let s = |x: &Summary| [fmt_f(x.mean), x.half_width_field()];
        let summary = csv_text(
            &self.config,
            &[
                "power_dbm",
                "runs",
                "failures",
                "j_det_fixed",
                "j_det_fixed_ci",
                "j_det_tuned",
                "j_det_tuned_ci",
                "j_lat_fixed",
                "j_lat_fixed_ci",
                "j_lat_tuned",
                "j_lat_tuned_ci",
                "latency_reduction",
                "sensing_power_fixed",
                "sensing_power_fixed_ci",
                "sensing_power_tuned",
                "sensing_power_tuned_ci",
                "comm_power_fixed",
                "comm_power_tuned",
                "n_eq",
            ],
            self.rows.iter().map(|r| {
                let mut row = vec![fmt_f(r.power_dbm), r.runs.to_string(), r.failures.to_string()];
                for x in [&r.j_det_fixed, &r.j_det_tuned, &r.j_lat_fixed, &r.j_lat_tuned] {
                    row.extend(s(x));
                }
                row.push(fmt_f(r.latency_reduction));
                row.extend(s(&r.sensing_fixed));
                row.extend(s(&r.sensing_tuned));
                row.push(fmt_f(1.0 - r.sensing_fixed.mean));
                row.push(fmt_f(1.0 - r.sensing_tuned.mean));
                row.push(fmt_f(r.n_eq.mean));
                row
            }),
        )?;
        let na = || "na".to_string();
        let runs = csv_text(
            &self.config,
            &[
                "power_dbm",
                "repetition",
                "j_det_fixed",
                "j_lat_fixed",
                "sensing_power_fixed",
                "j_det_tuned",
                "j_lat_tuned",
                "sensing_power_tuned",
                "t1",
                "t2",
                "t3",
                "n_eq",
                "status",
            ],
            self.records.iter().map(|r| {
                let mut row = vec![
                    fmt_f(r.power_dbm),
                    r.repetition.to_string(),
                    fmt_f(r.fixed.j_det),
                    fmt_f(r.fixed.j_lat),
                    fmt_f(r.fixed.j_pow),
                ];
                match r.tuned {
                    Some(h) => row.extend([fmt_f(h.j_det), fmt_f(h.j_lat), fmt_f(h.j_pow)]),
                    None => row.extend([na(), na(), na()]),
                }
                match r.tuned_thresholds {
                    Some(t) => row.extend(t.iter().map(|x| fmt_f(*x))),
                    None => row.extend([na(), na(), na()]),
                }
                row.push(fmt_f(r.n_eq));
                row.push(r.failure.clone().unwrap_or_else(|| "ok".into()));
                row
            }),
        )?;
        Ok(vec![
            OutputFile {
                name: "sweep_summary.csv".into(),
                contents: summary,
            },
            OutputFile {
                name: "sweep_runs.csv".into(),
                contents: runs,
            },
        ])
    }
}

fn sweep_point(cfg: &BenchConfig, pi: usize, power: f64, r: usize) -> Result<SweepRecord, BenchError> {
    let scenario = placed_scenario(cfg, r, power);
    let weights = cfg.experiment.sweep_weights;
    let objective = objective_for(cfg, &scenario, weights)?;
    let fixed_t = match cfg.experiment.fixed_thresholds {
        Some([a, b, c]) => ThresholdVector::new(a, b, c)?,
        None => initial_thresholds(cfg, r)?,
    };
    let seed = repetition_seed(cfg, r, 1 + pi as u64);
    let episodes = cfg.experiment.eval_episodes;
    let fixed = held_out(&objective, &fixed_t, seed, episodes)?;
    let mut rec = SweepRecord {
        power_dbm: power,
        repetition: r,
        fixed,
        tuned: None,
        tuned_thresholds: None,
        n_eq: f64::NAN,
        failure: None,
    };
    match run_method(cfg, Method::RaceCma, &objective, &fixed_t, seed) {
        Ok(run) => {
            rec.tuned = Some(held_out(&objective, &run.thresholds, seed, episodes)?);
            rec.tuned_thresholds = Some(run.thresholds.as_array());
            rec.n_eq = run.n_eq;
        }
        Err(e) => rec.failure = Some(format!("failed: {e}")),
    }
    Ok(rec)
}

/// Fixed thresholds against RACE-CMA-tuned thresholds (started from the
/// fixed ones) at every grid power. The fixed baseline is the repetition's
/// random initial configuration unless the config pins one.
pub fn run_sweep(cfg: &BenchConfig) -> Result<SweepReport, BenchError> {
    cfg.validate()?;
    let grid = &cfg.experiment.power_grid;
    if grid.len() < 2 {
        return Err(BenchError::Config("the power sweep needs at least two grid points".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|pi| (0..cfg.experiment.repetitions).map(move |r| (pi, r)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(pi, r)| sweep_point(cfg, pi, grid[pi], r))
        .collect::<Result<Vec<_>, _>>()?;

    let rows = grid
        .iter()
        .enumerate()
        .map(|(pi, &power)| {
            let mine: Vec<&SweepRecord> = records[pi * cfg.experiment.repetitions..][..cfg.experiment.repetitions]
                .iter()
                .collect();
            let ok: Vec<(&SweepRecord, HeldOut)> = mine.iter().filter_map(|r| r.tuned.map(|t| (*r, t))).collect();
            let col = |f: &dyn Fn(&SweepRecord, &HeldOut) -> f64| {
                Summary::of(&ok.iter().map(|(r, t)| f(r, t)).collect::<Vec<_>>())
            };
            let j_lat_fixed = col(&|r, _| r.fixed.j_lat);
            let j_lat_tuned = col(&|_, t| t.j_lat);
            SweepRow {
                power_dbm: power,
                runs: mine.len(),
                failures: mine.len() - ok.len(),
                j_det_fixed: col(&|r, _| r.fixed.j_det),
                j_det_tuned: col(&|_, t| t.j_det),
                latency_reduction: if j_lat_fixed.mean > 0.0 {
                    1.0 - j_lat_tuned.mean / j_lat_fixed.mean
                } else {
                    0.0
                },
                j_lat_fixed,
                j_lat_tuned,
                sensing_fixed: col(&|r, _| r.fixed.j_pow),
                sensing_tuned: col(&|_, t| t.j_pow),
                n_eq: col(&|r, _| r.n_eq),
            }
        })
        .collect();
    Ok(SweepReport {
        config: cfg.clone(),
        rows,
        records,
    })
}
