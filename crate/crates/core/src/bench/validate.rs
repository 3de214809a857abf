//! Acceptance checks.
//!
//! Each check returns a [`CriterionResult`]; [`run_all`] runs the twelve in
//! order. [`ValidationHooks`] deliberately corrupt state so the checks can be
//! shown to fail.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DVector, Vector2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{csv_text, run_compare, run_convergence, run_sweep, BenchConfig, BenchError, Method, OutputFile};
use crate::baselines::{posterior_crossing, Gaussian};
use crate::cma::{cma_optimize, default_params, CmaOptions, CmaState, IdentityMap};
use crate::objective::{CostLedger, Evaluator, NoisySphere, ObjectiveError, Sphere, StochasticObjective};
use crate::race::{race_cma_optimize, race_generation, EmpiricalCdf, FeasibleMap, RacingConfig};
use crate::seed::{self, Stream};
use crate::sim::{
    dbm_to_watts, null_set_rms, realize_channel, synthesize_rx_grid, MatchedFilter, NullSet, ScenarioConfig,
    Simulator, TargetState,
};

pub const CRITERIA: [(usize, &str); 12] = [
    (1, "cost identity"),
    (2, "ten-generation cost"),
    (3, "degenerate-limit equivalence"),
    (4, "efficiency ordering"),
    (5, "convergence direction"),
    (6, "sweep direction"),
    (7, "MAP analytic threshold"),
    (8, "SPSA unbiasedness"),
    (9, "CMA-ES invariants"),
    (10, "feasibility totality"),
    (11, "simulator physics"),
    (12, "end-to-end reproducibility"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

/// Fault injection for negative controls.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ValidationHooks {
    /// Overwrite the covariance before the positive-definiteness check.
    pub corrupt_covariance: bool,
    /// Add an uncounted charge before the cost-identity comparison.
    pub tamper_ledger: bool,
}

type Outcome = Result<(bool, String), BenchError>;

pub fn check(id: usize, cfg: &BenchConfig, hooks: ValidationHooks) -> Result<CriterionResult, BenchError> {
    let name = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map(|c| c.1)
        .ok_or_else(|| BenchError::Config(format!("no acceptance criterion {id}")))?;
    let start = Instant::now();
    let outcome = match id {
        1 => cost_identity(hooks),
        2 => ten_generation_cost(),
        3 => degenerate_limit(),
        4 => efficiency_ordering(cfg),
        5 => convergence_direction(cfg),
        6 => sweep_direction(cfg),
        7 => map_threshold(cfg.experiment.master_seed),
        8 => spsa_unbiased(),
        9 => cma_invariants(cfg.experiment.master_seed, hooks),
        10 => feasibility(cfg.experiment.master_seed, cfg.racing.min_spacing),
        11 => simulator_physics(cfg),
        _ => reproducibility(cfg),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Ok(CriterionResult {
        id,
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs the listed criteria in order, calling `progress` after each.
pub fn run_selected(
    cfg: &BenchConfig,
    hooks: ValidationHooks,
    ids: &[usize],
    mut progress: impl FnMut(&CriterionResult),
) -> Result<Vec<CriterionResult>, BenchError> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        let r = check(id, cfg, hooks)?;
        progress(&r);
        out.push(r);
    }
    Ok(out)
}

pub fn run_all(cfg: &BenchConfig, hooks: ValidationHooks) -> Result<Vec<CriterionResult>, BenchError> {
    let ids: Vec<usize> = CRITERIA.iter().map(|c| c.0).collect();
    run_selected(cfg, hooks, &ids, |_| {})
}

pub fn results_file(cfg: &BenchConfig, results: &[CriterionResult]) -> Result<OutputFile, BenchError> {
    let contents = csv_text(
        cfg,
        &["criterion", "name", "status", "seconds", "detail"],
        results.iter().map(|r| {
            vec![
                r.id.to_string(),
                r.name.clone(),
                if r.passed { "pass" } else { "fail" }.to_string(),
                format!("{:.3}", r.seconds),
                r.detail.clone(),
            ]
        }),
    )?;
    Ok(OutputFile {
        name: "validate.csv".into(),
        contents,
    })
}

fn cost_identity(hooks: ValidationHooks) -> Outcome {
    let f = Sphere::new(vec![0.0; 3]);
    let p = default_params(3, 12)?;
    let mut got = Vec::new();
    for racing in [RacingConfig::default(), RacingConfig::benchmark()] {
        let ledger = CostLedger::new();
        let ev = Evaluator::new(&f, &ledger);
        let s = CmaState::new(vec![1.0; 3], 0.5)?;
        race_generation(&s, &p, &racing, &ev, &IdentityMap, 3)?;
        if hooks.tamper_ledger {
            ledger.tamper(0.05);
        }
        got.push(ledger.total());
    }
    let opts = CmaOptions {
        budget: 1e6,
        max_generations: Some(1),
        ..Default::default()
    };
    let plain = cma_optimize(&f, &IdentityMap, &p, CmaState::new(vec![1.0; 3], 0.5)?, &opts)?;
    got.push(plain.ledger.total);
    let passed = got == [8.4, 7.2, 12.0];
    Ok((
        passed,
        format!("RACE beta=1 {}, beta=0.8 {}, CMA-ES {} (expect 8.4, 7.2, 12)", got[0], got[1], got[2]),
    ))
}

fn ten_generation_cost() -> Outcome {
    let f = NoisySphere::new(vec![0.0; 3], 0.1);
    let p = default_params(3, 12)?;
    let opts = CmaOptions {
        budget: 1e6,
        max_generations: Some(10),
        ..Default::default()
    };
    let out = race_cma_optimize(
        &f,
        &IdentityMap,
        &p,
        &RacingConfig::benchmark(),
        CmaState::new(vec![1.0; 3], 0.5)?,
        &opts,
    )?;
    let total = out.ledger.total;
    Ok((
        out.reports.len() == 10 && total == 72.0,
        format!("{} generations, {total} N_eq (expect 72)", out.reports.len()),
    ))
}

fn degenerate_limit() -> Outcome {
    let f = Sphere::new(vec![0.3, -0.2, 0.1]);
    let p = default_params(3, 12)?;
    let racing = RacingConfig {
        promotion_fraction: 1.0,
        fidelity_ratio: 1.0,
        truncation: 1.0,
        repetitions: 1,
        diagonal_warmup_generations: 0,
        mirrored_sampling: false,
        ..RacingConfig::default()
    };
    let opts = CmaOptions {
        budget: 1e9,
        max_generations: Some(20),
        seed: 4,
        ..Default::default()
    };
    let init = CmaState::new(vec![2.0, -1.0, 0.5], 1.0)?;
    let a = cma_optimize(&f, &IdentityMap, &p, init.clone(), &opts)?;
    let b = race_cma_optimize(&f, &IdentityMap, &p, &racing, init, &opts)?;
    let same = a.history.len() == b.reports.len()
        && a.history.iter().zip(&b.reports).all(|(x, y)| x.mean == y.mean)
        && a.state == b.state;
    Ok((same, format!("{} generations, means bitwise equal: {same}", a.history.len())))
}

fn efficiency_ordering(cfg: &BenchConfig) -> Outcome {
    let mut c = cfg.clone();
    c.experiment.methods = Method::ALL.to_vec();
    let report = run_compare(&c)?;
    let eff = |m: Method| report.row(m).map_or(f64::NAN, |r| r.efficiency);
    let (race, cma, spsa, ipn) = (eff(Method::RaceCma), eff(Method::CmaEs), eff(Method::Spsa), eff(Method::Ipn));
    let ratio = race / cma;
    let passed = cma > 0.0 && ratio >= 1.3 && race.min(cma) > spsa.max(ipn);
    Ok((
        passed,
        format!(
            "dJ/N_eq RACE-CMA {race:.5}, CMA-ES {cma:.5} (ratio {ratio:.2}, need 1.3), SPSA {spsa:.5}, IPN {ipn:.5}; {} reps",
            c.experiment.repetitions
        ),
    ))
}

fn convergence_direction(cfg: &BenchConfig) -> Outcome {
    const GENERATION: usize = 4;
    const POWER: f64 = 24.7;
    if cfg.cma.generations < GENERATION {
        return Ok((false, format!("only {} generations configured", cfg.cma.generations)));
    }
    let mut c = cfg.clone();
    c.experiment.methods = vec![Method::CmaEs, Method::RaceCma];
    c.experiment.convergence_powers = vec![POWER];
    let report = run_convergence(&c)?;
    let at = |m: Method| report.row(POWER, m, GENERATION).map_or(f64::NAN, |r| r.j_det.mean);
    let (race, cma) = (at(Method::RaceCma), at(Method::CmaEs));
    Ok((
        race > cma,
        format!("generation {GENERATION} J_det RACE-CMA {race:.4} vs CMA-ES {cma:.4} at {POWER} dBm"),
    ))
}

fn sweep_direction(cfg: &BenchConfig) -> Outcome {
    let report = run_sweep(cfg)?;
    let mut worse = Vec::new();
    for r in &report.rows {
        if !(r.j_det_tuned.mean >= r.j_det_fixed.mean) {
            worse.push(format!("{} dBm {:.4} < {:.4}", r.power_dbm, r.j_det_tuned.mean, r.j_det_fixed.mean));
        }
    }
    let low = report
        .rows
        .iter()
        .min_by(|a, b| a.power_dbm.total_cmp(&b.power_dbm))
        .ok_or_else(|| BenchError::Config("empty power grid".into()))?;
    let passed = worse.is_empty() && low.latency_reduction >= 0.3;
    let det = if worse.is_empty() {
        "J_det tuned >= fixed at every power".to_string()
    } else {
        format!("J_det regressed at {}", worse.join(", "))
    };
    Ok((
        passed,
        format!("{det}; latency reduction {:.0}% at {} dBm (need 30%)", 100.0 * low.latency_reduction, low.power_dbm),
    ))
}

fn map_threshold(master: u64) -> Outcome {
    let mut rng = seed::rng(seed::child(master, Stream::Calibration, 7, 0));
    let mut draw = |mean: f64, n: usize| -> Vec<f64> { (0..n).map(|_| mean + rng.sample::<f64, _>(StandardNormal)).collect() };
    let h0 = draw(0.0, 9000);
    let h1 = draw(2.0, 1000);
    let x = posterior_crossing(Gaussian::fit(&h0)?, 0.9, Gaussian::fit(&h1)?, 0.1)?;
    let expect = 1.0 + 9f64.ln() / 2.0;
    Ok((
        (x - expect).abs() <= 0.02,
        format!("threshold {x:.4} vs {expect:.4} from 10^4 samples"),
    ))
}

fn spsa_unbiased() -> Outcome {
    let f = Sphere::new(vec![0.0; 3]);
    let t = [1.0; 3];
    let c = 0.2;
    let mut avg = [0.0; 3];
    for pattern in 0..8u32 {
        let d: [f64; 3] = std::array::from_fn(|i| if pattern >> i & 1 == 1 { -1.0 } else { 1.0 });
        let plus: Vec<f64> = (0..3).map(|i| t[i] + c * d[i]).collect();
        let minus: Vec<f64> = (0..3).map(|i| t[i] - c * d[i]).collect();
        let diff = f.evaluate(&plus, 0, 1.0)? - f.evaluate(&minus, 0, 1.0)?;
        for i in 0..3 {
            avg[i] += diff / (2.0 * c * d[i]) / 8.0;
        }
    }
    let err = avg.iter().map(|g| (g - 2.0).abs()).fold(0.0, f64::max);
    Ok((
        err <= 1e-12,
        format!("mean estimate ({:.15}, {:.15}, {:.15}), max error {err:.1e}", avg[0], avg[1], avg[2]),
    ))
}

/// Strictly increasing transform of another objective's value.
struct Monotone<'a, O>(&'a O);

impl<O: StochasticObjective> StochasticObjective for Monotone<'_, O> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn evaluate(&self, point: &[f64], seed: u64, fidelity: f64) -> Result<f64, ObjectiveError> {
        let v = self.0.evaluate(point, seed, fidelity)?;
        Ok(v.exp() + 3.0 * v)
    }
}

fn cma_invariants(master: u64, hooks: ValidationHooks) -> Outcome {
    let p = default_params(3, 12)?;
    let run_seed = seed::child(master, Stream::Evaluation, 9, 0);
    let opts = |generations: usize| CmaOptions {
        budget: 1e9,
        max_generations: Some(generations),
        min_sigma: 0.0,
        seed: run_seed,
    };

    let noisy = NoisySphere::new(vec![0.5, -0.3, 0.2], 0.3);
    let mut state = cma_optimize(&noisy, &IdentityMap, &p, CmaState::new(vec![2.0; 3], 1.0)?, &opts(100))?.state;
    if hooks.corrupt_covariance {
        state.covariance_mut()[(0, 1)] += 0.5;
        state.covariance_mut()[(2, 2)] = -1.0;
    }
    let pd = state.generation() == 100 && state.covariance_is_valid();

    let base = NoisySphere::new(vec![0.5, -0.3, 0.2], 0.1);
    let init = CmaState::new(vec![1.5, 1.0, -1.0], 0.8)?;
    let a = cma_optimize(&base, &IdentityMap, &p, init.clone(), &opts(40))?;
    let b = cma_optimize(&Monotone(&base), &IdentityMap, &p, init.clone(), &opts(40))?;
    let rank_only = a.history.len() == b.history.len()
        && a.history.iter().zip(&b.history).all(|(x, y)| x.mean == y.mean && x.sigma == y.sigma)
        && a.state == b.state;

    let shift = [3.0, -7.0, 11.5];
    let moved: Vec<f64> = base.sphere.center.iter().zip(shift).map(|(c, s)| c + s).collect();
    let shifted = NoisySphere::new(moved, 0.1);
    let m0: Vec<f64> = init.mean().iter().zip(shift).map(|(m, s)| m + s).collect();
    let c = cma_optimize(&shifted, &IdentityMap, &p, CmaState::new(m0, 0.8)?, &opts(40))?;
    let shift_v = DVector::from_row_slice(&shift);
    let mut drift = 0.0f64;
    for (x, y) in a.history.iter().zip(&c.history) {
        for i in 0..3 {
            drift = drift.max((y.mean[i] - x.mean[i] - shift[i]).abs());
        }
        drift = drift.max((y.sigma - x.sigma).abs() / x.sigma);
    }
    drift = drift.max((c.state.mean() - a.state.mean() - shift_v).amax());
    drift = drift.max((c.state.covariance() - a.state.covariance()).amax());
    let equivariant = a.history.len() == c.history.len() && drift <= 1e-9;

    Ok((
        pd && rank_only && equivariant,
        format!(
            "PD after 100 noisy updates: {pd} (min eigenvalue {:.3e}); rank-only bitwise: {rank_only}; translation drift {drift:.1e}",
            state.min_eigenvalue()
        ),
    ))
}

fn feasibility(master: u64, delta: f64) -> Outcome {
    const N: usize = 1_000_000;
    let mut rng = seed::rng(seed::child(master, Stream::Sampling, 10, 0));
    let cdf_samples: Vec<f64> = (0..2000).map(|_| 5.0 + 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let maps = [FeasibleMap::softplus(delta)?, FeasibleMap::quantile(delta, EmpiricalCdf::new(cdf_samples)?)?];
    let mut violations = 0usize;
    for (mi, map) in maps.iter().enumerate() {
        violations += (0..N as u64)
            .into_par_iter()
            .map(|i| {
                let mut r = seed::rng(seed::child(master, Stream::Sampling, 11 + mi as u64, i));
                let scale = [1.0, 10.0, 100.0][(i % 3) as usize];
                let u: [f64; 3] = std::array::from_fn(|_| scale * r.sample::<f64, _>(StandardNormal));
                let t = map.apply(&u).as_array();
                usize::from(!(t[1] - t[0] >= delta && t[2] - t[1] >= delta))
            })
            .sum::<usize>();
    }
    Ok((
        violations == 0,
        format!("{violations} spacing violations in {N} draws per map (softplus, quantile)"),
    ))
}

fn simulator_physics(cfg: &BenchConfig) -> Outcome {
    let sc = cfg.scenario.clone();
    let master = cfg.experiment.master_seed;

    // noiseless on-grid targets
    let filter = MatchedFilter::for_scenario(&sc)?;
    let w = filter.window().clone();
    let mut misses = Vec::new();
    for i in 0..w.delays.len() {
        for j in 0..w.dopplers.len() {
            let z: Vec<Complex64> = (0..sc.n_subcarriers)
                .flat_map(|k| {
                    let (tau, nu) = (w.delays[i], w.dopplers[j]);
                    (0..sc.n_symbols).map(move |m| {
                        let ph = -2.0 * PI * k as f64 * sc.subcarrier_spacing * tau
                            + 2.0 * PI * nu * m as f64 * sc.symbol_duration;
                        Complex64::from_polar(0.7, ph + 0.4)
                    })
                })
                .collect();
            let (pi, pj, _) = filter.apply_demodulated(&z).peak();
            if (pi, pj) != (i, j) {
                misses.push((i, j));
            }
        }
    }
    let peak_ok = misses.is_empty();

    // noise floor from the null set
    let wide = ScenarioConfig {
        n_symbols: 256,
        ..sc.clone()
    };
    let null = NullSet::for_scenario(&wide);
    let target = TargetState::new(Vector2::new(0.0, 180.0), Vector2::new(1.0, -2.0), &wide.region);
    let ch = realize_channel(&wide, &target, &wide.geometry())?;
    let sigma = wide.noise_variance().sqrt();
    let ratios = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let g = synthesize_rx_grid(&wide, &ch, 0, 0.0, seed::child(master, Stream::Frame, s, 11))?;
            Ok(null_set_rms(&g.demodulated(), g.n_subcarriers, g.n_symbols, &null) / sigma)
        })
        .collect::<Result<Vec<f64>, BenchError>>()?;
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let floor_ok = null.len(wide.n_symbols) >= 1000 && (mean_ratio - 1.0).abs() <= 0.05;

    // RESI against transmit power under common frame seeds
    let sim = Simulator::new(sc.clone())?;
    let target = TargetState::new(Vector2::new(10.0, 160.0), Vector2::new(1.5, 0.5), &sc.region);
    let ch = realize_channel(&sc, &target, &sc.geometry())?;
    let beam = sc
        .covering_beam(ch.departure_angle)
        .ok_or_else(|| BenchError::Config("check target lies outside the beam sweep".into()))?;
    let powers = [10.0, 15.0, 20.0, 24.7, 30.0];
    let means = powers
        .iter()
        .map(|&dbm| {
            let total = (0..200u64)
                .into_par_iter()
                .map(|s| Ok(sim.sense(&ch, beam, dbm_to_watts(dbm), seed::child(master, Stream::Frame, s, 12))?.value))
                .collect::<Result<Vec<f64>, BenchError>>()?
                .iter()
                .sum::<f64>();
            Ok(total / 200.0)
        })
        .collect::<Result<Vec<f64>, BenchError>>()?;
    let monotone = means.windows(2).all(|p| p[1] >= p[0]);

    let resi: Vec<String> = means.iter().map(|m| format!("{m:.2}")).collect();
    Ok((
        peak_ok && floor_ok && monotone,
        format!(
            "peak at true bin {}/{}; null-set sigma ratio {mean_ratio:.4} over {} REs; mean RESI [{}] monotone: {monotone}",
            w.delays.len() * w.dopplers.len() - misses.len(),
            w.delays.len() * w.dopplers.len(),
            null.len(wide.n_symbols),
            resi.join(", ")
        ),
    ))
}

fn reproducibility(cfg: &BenchConfig) -> Outcome {
    let mut c = cfg.clone();
    c.experiment.repetitions = c.experiment.repetitions.min(3);
    let a = run_compare(&c)?.files()?;
    let b = run_compare(&c)?.files()?;
    let same = a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.name == y.name && x.contents.as_bytes() == y.contents.as_bytes());
    let bytes: usize = a.iter().map(|f| f.contents.len()).sum();
    Ok((
        same,
        format!("two compare runs ({} reps) give identical CSVs: {same} ({bytes} bytes)", c.experiment.repetitions),
    ))
}
