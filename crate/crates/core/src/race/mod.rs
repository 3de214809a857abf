//! RACE-CMA: two-stage racing under common random numbers, inverse-variance
//! recombination, feasible threshold parameterization, structured sampling
//! and a diagonal-covariance warmup on top of the CMA-ES backbone.

mod map;

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cma::{sample_population, standard_normal, CmaError, CmaOptions, CmaParams, CmaState, Sample, SearchMap};
use crate::objective::{
    derive_seed_plan, prior_variance, CostKind, CostLedger, CrnSeedPlan, Evaluator, LedgerSnapshot,
    ObjectiveError, RepeatedEstimate, StochasticObjective,
};
use crate::seed::{self, Stream};

pub use map::{calibrate_resi_cdf, softplus, softplus_inv, EmpiricalCdf, FeasibleMap, MapMode};

#[derive(Debug, Error)]
pub enum RaceError {
    #[error("invalid racing configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Cma(#[from] CmaError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RacingConfig {
    /// Share `rho` of the population promoted to Stage 2.
    pub promotion_fraction: f64,
    /// Stage-1 fidelity `tau`.
    pub fidelity_ratio: f64,
    /// Stage-2 fidelity `beta` (1 = full episodes).
    pub truncation: f64,
    pub repetitions: usize,
    /// Weighting floor, also added to non-promoted Stage-1 values.
    pub epsilon: f64,
    pub min_spacing: f64,
    pub diagonal_warmup_generations: usize,
    pub mirrored_sampling: bool,
    /// Orthogonalize each block of base directions when it fits the dimension.
    pub orthogonal_sampling: bool,
    /// Variance used when no repetition variance is available.
    pub fallback_variance: f64,
}

impl Default for RacingConfig {
    fn default() -> Self {
        Self {
            promotion_fraction: 0.5,
            fidelity_ratio: 0.2,
            truncation: 1.0,
            repetitions: 1,
            epsilon: 1e-8,
            min_spacing: 0.1,
            diagonal_warmup_generations: 2,
            mirrored_sampling: true,
            orthogonal_sampling: true,
            fallback_variance: 1.0,
        }
    }
}

impl RacingConfig {
    /// Library defaults with Stage-2 truncation `beta = 0.8`.
    pub fn benchmark() -> Self {
        Self {
            truncation: 0.8,
            ..Self::default()
        }
    }

    pub fn validate(&self, lambda: usize) -> Result<(), RaceError> {
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(RaceError::Config(format!("{name} = {v} must lie in (0, 1]")))
            }
        };
        frac("promotion_fraction", self.promotion_fraction)?;
        frac("fidelity_ratio", self.fidelity_ratio)?;
        frac("truncation", self.truncation)?;
        if self.repetitions == 0 {
            return Err(RaceError::Config("repetitions must be >= 1".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(RaceError::Config("epsilon must be finite and >= 0".into()));
        }
        if !(self.min_spacing > 0.0) {
            return Err(RaceError::Config("min_spacing must be positive".into()));
        }
        if !(self.fallback_variance >= 0.0) {
            return Err(RaceError::Config("fallback_variance must be >= 0".into()));
        }
        if self.mirrored_sampling && lambda % 2 != 0 {
            return Err(RaceError::Config(format!("mirrored sampling needs an even population, got {lambda}")));
        }
        Ok(())
    }

    /// `k = max(1, floor(rho * lambda))`.
    pub fn promoted_count(&self, lambda: usize) -> usize {
        ((self.promotion_fraction * lambda as f64 + 1e-9).floor() as usize).clamp(1, lambda)
    }

    /// `lambda * tau + k * r * beta`, at the ledger's resolution.
    pub fn generation_cost(&self, lambda: usize) -> f64 {
        let raw = lambda as f64 * self.fidelity_ratio
            + (self.promoted_count(lambda) * self.repetitions) as f64 * self.truncation;
        (raw * 1e9).round() / 1e9
    }
}

/// Stage 1: every candidate once at fidelity `tau` under the shared seed.
pub fn stage1_screen<O: StochasticObjective + ?Sized>(
    eval: &Evaluator<'_, O>,
    points: &[Vec<f64>],
    plan: &CrnSeedPlan,
    tau: f64,
) -> Result<Vec<f64>, RaceError> {
    Ok(eval.evaluate_batch(points, plan.stage1, tau, CostKind::Stage1)?)
}

/// Indices of the `k` smallest values in ascending order, ties by index.
pub fn promote(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx.truncate(k.min(values.len()));
    idx
}

/// Stage 2: `r` repetitions per promoted point under the shared seeds.
pub fn stage2_refine<O: StochasticObjective + ?Sized>(
    eval: &Evaluator<'_, O>,
    points: &[Vec<f64>],
    plan: &CrnSeedPlan,
    fidelity: f64,
) -> Result<Vec<RepeatedEstimate>, RaceError> {
    Ok(eval.evaluate_batch_repeated(points, &plan.stage2, fidelity, CostKind::Stage2)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedCandidate {
    pub index: usize,
    pub value: f64,
    pub variance: f64,
    pub promoted: bool,
}

/// Merges both stages into one ascending ranking. Non-promoted candidates
/// carry `J~ + epsilon` and the largest promoted variance.
pub fn assemble_ranking(
    stage1: &[f64],
    promoted: &[usize],
    estimates: &[RepeatedEstimate],
    epsilon: f64,
    fallback_variance: f64,
) -> Result<Vec<RankedCandidate>, RaceError> {
    if promoted.len() != estimates.len() {
        return Err(RaceError::Config(format!(
            "{} estimates for {} promoted candidates",
            estimates.len(),
            promoted.len()
        )));
    }
    let prior = prior_variance(estimates, fallback_variance);
    let worst = estimates
        .iter()
        .map(|e| e.variance_or(prior))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<RankedCandidate> = stage1
        .iter()
        .enumerate()
        .map(|(i, &v)| RankedCandidate {
            index: i,
            value: v + epsilon,
            variance: worst,
            promoted: false,
        })
        .collect();
    for (&i, e) in promoted.iter().zip(estimates) {
        out[i] = RankedCandidate {
            index: i,
            value: e.mean,
            variance: e.variance_or(prior),
            promoted: true,
        };
    }
    out.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.index.cmp(&b.index)));
    Ok(out)
}

/// `w~_i = (w_i / (eps + s_i)) / sum_j (w_j / (eps + s_j))`; equal variances
/// return `w` unchanged.
pub fn uncertainty_weights(base: &[f64], variances: &[f64], epsilon: f64) -> Vec<f64> {
    assert_eq!(base.len(), variances.len(), "one variance per weight");
    if variances.windows(2).all(|w| w[0] == w[1]) {
        return base.to_vec();
    }
    let raw: Vec<f64> = base
        .iter()
        .zip(variances)
        .map(|(w, s)| w / (epsilon + s))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// Gram-Schmidt on `block`, each output keeping its input norm.
fn orthogonalize(block: &mut [DVector<f64>]) {
    let norms: Vec<f64> = block.iter().map(|z| z.norm()).collect();
    for i in 0..block.len() {
        for j in 0..i {
            let (head, tail) = block.split_at_mut(i);
            let q = &head[j];
            let proj = tail[0].dot(q);
            tail[0] -= q * proj;
        }
        let n = block[i].norm();
        if n > 0.0 {
            block[i] /= n;
        }
    }
    for (z, n) in block.iter_mut().zip(norms) {
        *z *= n;
    }
}

/// Mirrored pairs `(z, -z)`; base directions are orthogonalized when
/// `orthogonal` and `lambda / 2 <= n`. Without mirroring this is plain
/// CMA-ES sampling.
pub fn structured_sample(
    state: &CmaState,
    lambda: usize,
    seed: u64,
    mirrored: bool,
    orthogonal: bool,
) -> Result<Vec<Sample>, RaceError> {
    if !mirrored {
        return Ok(sample_population(state, lambda, seed));
    }
    if lambda % 2 != 0 {
        return Err(RaceError::Config(format!("mirrored sampling needs an even population, got {lambda}")));
    }
    let n = state.dim();
    let half = lambda / 2;
    let mut rng = seed::rng(seed);
    let mut base: Vec<DVector<f64>> = (0..half).map(|_| standard_normal(&mut rng, n)).collect();
    if orthogonal && half <= n {
        orthogonalize(&mut base);
    }
    let mut out = Vec::with_capacity(lambda);
    for z in base {
        let neg = -z.clone();
        out.push(Sample {
            u: state.transform(&z),
            z,
        });
        out.push(Sample {
            u: state.transform(&neg),
            z: neg,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationReport {
    pub generation: usize,
    pub stage1: Vec<f64>,
    pub promoted: Vec<usize>,
    pub stage2: Vec<RepeatedEstimate>,
    /// Recombination weights actually used, in elite rank order.
    pub weights: Vec<f64>,
    pub ledger_delta: f64,
    pub n_eq: f64,
    /// Best Stage-2 mean seen so far.
    pub best_cost: f64,
    pub sigma: f64,
    pub mean: Vec<f64>,
    /// Search point of the best Stage-2 mean so far.
    pub best_u: Vec<f64>,
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_reports_csv<W: Write>(reports: &[GenerationReport], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "generation",
        "stage1_min",
        "stage1_median",
        "promoted",
        "stage2_means",
        "stage2_variances",
        "weights",
        "best_cost",
        "sigma",
        "n_eq",
    ])?;
    for r in reports {
        let mut s1 = r.stage1.clone();
        s1.sort_by(f64::total_cmp);
        let median = if s1.is_empty() {
            f64::NAN
        } else if s1.len() % 2 == 1 {
            s1[s1.len() / 2]
        } else {
            0.5 * (s1[s1.len() / 2 - 1] + s1[s1.len() / 2])
        };
        w.write_record([
            r.generation.to_string(),
            format!("{:.9}", s1.first().copied().unwrap_or(f64::NAN)),
            format!("{median:.9}"),
            join(&r.promoted),
            join(r.stage2.iter().map(|e| format!("{:.9}", e.mean))),
            join(r.stage2.iter().map(|e| match e.variance {
                Some(v) => format!("{v:.9}"),
                None => "na".into(),
            })),
            join(r.weights.iter().map(|w| format!("{w:.9}"))),
            format!("{:.9}", r.best_cost),
            format!("{:.9e}", r.sigma),
            format!("{:.6}", r.n_eq),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One RACE-CMA generation (sample, map, screen, promote, refine, rank,
/// weight, update). Returns the next state, the report and the promoted
/// candidates' search points.
pub fn race_generation<O, M>(
    state: &CmaState,
    params: &CmaParams,
    racing: &RacingConfig,
    eval: &Evaluator<'_, O>,
    map: &M,
    master_seed: u64,
) -> Result<(CmaState, GenerationReport, Vec<Vec<f64>>), RaceError>
where
    O: StochasticObjective + ?Sized,
    M: SearchMap + ?Sized,
{
    racing.validate(params.lambda)?;
    let g = state.generation();
    let before = eval.ledger().total();
    let pop = structured_sample(
        state,
        params.lambda,
        seed::child(master_seed, Stream::Sampling, g as u64, 0),
        racing.mirrored_sampling,
        racing.orthogonal_sampling,
    )?;
    let us: Vec<Vec<f64>> = pop.iter().map(|s| s.u.as_slice().to_vec()).collect();
    let points: Vec<Vec<f64>> = us.iter().map(|u| map.map(u)).collect();
    let plan = derive_seed_plan(master_seed, g as u64, racing.repetitions);

    let stage1 = stage1_screen(eval, &points, &plan, racing.fidelity_ratio)?;
    let promoted = promote(&stage1, racing.promoted_count(params.lambda));
    let promoted_points: Vec<Vec<f64>> = promoted.iter().map(|&i| points[i].clone()).collect();
    let stage2 = stage2_refine(eval, &promoted_points, &plan, racing.truncation)?;

    let ranking = assemble_ranking(&stage1, &promoted, &stage2, racing.epsilon, racing.fallback_variance)?;
    let elites = &ranking[..params.mu];
    let variances: Vec<f64> = elites.iter().map(|c| c.variance).collect();
    let weights = uncertainty_weights(&params.weights, &variances, racing.epsilon);
    let xs: Vec<DVector<f64>> = elites.iter().map(|c| pop[c.index].u.clone()).collect();
    let diagonal = g < racing.diagonal_warmup_generations;
    let next = state.update(params, &xs, &weights, diagonal)?;

    let after = eval.ledger().total();
    let report = GenerationReport {
        generation: g + 1,
        stage1,
        promoted: promoted.clone(),
        stage2,
        weights,
        ledger_delta: after - before,
        n_eq: after,
        best_cost: f64::NAN,
        sigma: next.sigma(),
        mean: next.mean().as_slice().to_vec(),
        best_u: Vec::new(),
    };
    let promoted_us = promoted.iter().map(|&i| us[i].clone()).collect();
    Ok((next, report, promoted_us))
}

#[derive(Debug, Clone)]
pub struct RaceOutcome {
    pub best_u: Vec<f64>,
    pub best_point: Vec<f64>,
    pub best_cost: f64,
    pub ledger: LedgerSnapshot,
    pub reports: Vec<GenerationReport>,
    pub state: CmaState,
}

impl RaceOutcome {
    pub fn write_reports_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        write_reports_csv(&self.reports, out)
    }
}

/// Full RACE-CMA loop. Stops at the generation cap, when the next
/// generation's cost would exceed the budget, or when sigma collapses.
pub fn race_cma_optimize<O, M>(
    objective: &O,
    map: &M,
    params: &CmaParams,
    racing: &RacingConfig,
    init: CmaState,
    options: &CmaOptions,
) -> Result<RaceOutcome, RaceError>
where
    O: StochasticObjective + ?Sized,
    M: SearchMap + ?Sized,
{
    racing.validate(params.lambda)?;
    if !(options.budget > 0.0) {
        return Err(RaceError::Config("budget must be positive".into()));
    }
    if init.dim() != params.n {
        return Err(RaceError::Config("initial mean does not match parameter dimension".into()));
    }
    let ledger = CostLedger::new();
    let eval = Evaluator::new(objective, &ledger);
    let gen_cost = racing.generation_cost(params.lambda);
    let mut state = init;
    let mut reports = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;

    loop {
        if options.max_generations.is_some_and(|cap| state.generation() >= cap)
            || state.sigma() < options.min_sigma
            || !ledger.fits(gen_cost, options.budget)
        {
            break;
        }
        let (next, mut report, promoted_us) = race_generation(&state, params, racing, &eval, map, options.seed)?;
        for (e, u) in report.stage2.iter().zip(promoted_us) {
            if best.as_ref().is_none_or(|b| e.mean < b.0) {
                best = Some((e.mean, u));
            }
        }
        report.best_cost = best.as_ref().map_or(f64::NAN, |b| b.0);
        report.best_u = best.as_ref().map_or_else(Vec::new, |b| b.1.clone());
        reports.push(report);
        state = next;
    }

    let (best_cost, best_u) = best.unwrap_or_else(|| (f64::NAN, state.mean().as_slice().to_vec()));
    let best_point = map.map(&best_u);
    Ok(RaceOutcome {
        best_u,
        best_point,
        best_cost,
        ledger: ledger.snapshot(),
        reports,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cma::{cma_optimize, default_params, IdentityMap};
    use crate::objective::{NoisySphere, Sphere};
    use approx::assert_relative_eq;

    #[test]
    fn promotion_rules() {
        assert_eq!(promote(&[3.0, 1.0, 4.0, 2.0], 2), vec![1, 3]);
        assert_eq!(promote(&[3.0, 1.0, 4.0, 2.0], 4).len(), 4);
        assert_eq!(promote(&[5.0; 6], 3), vec![0, 1, 2]);
        let c = RacingConfig::default();
        assert_eq!(c.promoted_count(12), 6);
        let tiny = RacingConfig {
            promotion_fraction: 0.01,
            ..RacingConfig::default()
        };
        assert_eq!(tiny.promoted_count(12), 1);
    }

    #[test]
    fn cost_identity() {
        let c = RacingConfig::default();
        assert_eq!(c.generation_cost(12), 8.4);
        assert_eq!(RacingConfig::benchmark().generation_cost(12), 7.2);
        let f = Sphere::new(vec![0.0; 3]);
        let p = default_params(3, 12).unwrap();
        for (cfg, expect) in [(RacingConfig::default(), 8.4), (RacingConfig::benchmark(), 7.2)] {
            let ledger = CostLedger::new();
            let ev = Evaluator::new(&f, &ledger);
            let s = CmaState::new(vec![1.0; 3], 0.5).unwrap();
            let (_, report, _) = race_generation(&s, &p, &cfg, &ev, &IdentityMap, 3).unwrap();
            assert_eq!(report.ledger_delta, expect);
            assert_eq!(ledger.total(), expect);
            let snap = ledger.snapshot();
            assert_eq!((snap.stage1_count, snap.stage2_count), (12, 6));
        }
    }

    #[test]
    fn stage_costs_and_purity() {
        let f = NoisySphere::new(vec![0.0; 3], 0.1);
        let ledger = CostLedger::new();
        let ev = Evaluator::new(&f, &ledger);
        let plan = derive_seed_plan(1, 0, 1);
        let pts = vec![vec![0.5, 0.5, 0.5]; 12];
        let v = stage1_screen(&ev, &pts, &plan, 0.2).unwrap();
        assert_eq!(ledger.total(), 2.4);
        assert!(v.iter().all(|&x| x == v[0]));
        let est = stage2_refine(&ev, &pts[..6], &plan, 1.0).unwrap();
        assert_eq!(ledger.total(), 8.4);
        assert!(est.iter().all(|e| e.variance.is_none()));
    }

    #[test]
    fn stage1_ranking_is_noise_free_under_common_seeds() {
        let f = NoisySphere::new(vec![0.0; 3], 0.5);
        let ledger = CostLedger::new();
        let ev = Evaluator::new(&f, &ledger);
        let pts: Vec<Vec<f64>> = (0..12).map(|i| vec![0.1 * i as f64, -0.05 * i as f64, 0.3]).collect();
        let noiseless: Vec<f64> = pts.iter().map(|p| f.sphere.value(p)).collect();
        for g in 0..20 {
            let plan = derive_seed_plan(7, g, 1);
            let noisy = stage1_screen(&ev, &pts, &plan, 0.2).unwrap();
            assert_eq!(promote(&noisy, 12), promote(&noiseless, 12));
        }
    }

    #[test]
    fn ranking_assembly() {
        let e = |m: f64, v: f64| RepeatedEstimate {
            mean: m,
            variance: Some(v),
            r: 2,
        };
        // all promoted: pure Stage-2 order
        let r = assemble_ranking(&[0.0, 0.0, 0.0], &[0, 1, 2], &[e(0.3, 1.0), e(0.1, 1.0), e(0.2, 1.0)], 1e-8, 1.0)
            .unwrap();
        assert_eq!(r.iter().map(|c| c.index).collect::<Vec<_>>(), vec![1, 2, 0]);

        // epsilon-free merge of disjoint sets
        let r = assemble_ranking(&[0.15, 0.9, 0.05, 0.7], &[1, 3], &[e(0.1, 0.5), e(0.2, 2.0)], 0.0, 1.0).unwrap();
        assert_eq!(r.iter().map(|c| c.index).collect::<Vec<_>>(), vec![2, 1, 0, 3]);
        let fallback = r.iter().find(|c| c.index == 2).unwrap();
        assert!(!fallback.promoted);
        assert_eq!(fallback.variance, 2.0);

        // a non-promoted leader outranks promoted ones but gets a smaller weight
        let r = assemble_ranking(&[0.01, 0.5, 0.6], &[1, 2], &[e(0.2, 0.01), e(0.3, 0.5)], 1e-8, 1.0).unwrap();
        assert_eq!(r[0].index, 0);
        let w = uncertainty_weights(&[0.5, 0.5], &[r[0].variance, r[1].variance], 1e-8);
        assert!(w[0] < w[1]);
        assert!(assemble_ranking(&[0.0; 3], &[0, 1], &[e(0.0, 0.0)], 0.0, 1.0).is_err());
    }

    #[test]
    fn inverse_variance_weights() {
        let base = [0.4, 0.3, 0.2, 0.1];
        assert_eq!(uncertainty_weights(&base, &[0.7; 4], 1e-8), base.to_vec());
        let w = uncertainty_weights(&[0.5, 0.5], &[1.0, 3.0], 0.0);
        assert_relative_eq!(w[0], 0.75, epsilon = 1e-15);
        assert_relative_eq!(w[1], 0.25, epsilon = 1e-15);
        let w = uncertainty_weights(&[0.5, 0.5], &[1.0, 1e9], 1e-8);
        assert!(w[1] < 1e-8);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn mirrored_and_orthogonal_sampling() {
        let s = CmaState::new(vec![1.0, 2.0, 3.0], 0.5).unwrap();
        let pop = structured_sample(&s, 4, 11, true, false).unwrap();
        assert_eq!(pop[1].z, -pop[0].z.clone());
        assert_eq!(pop[3].z, -pop[2].z.clone());
        let pop = structured_sample(&s, 12, 11, true, true).unwrap();
        let sum = pop.iter().fold(DVector::zeros(3), |acc, p| acc + &p.z);
        assert_eq!(sum, DVector::zeros(3));

        let pop = structured_sample(&s, 6, 5, true, true).unwrap();
        let base: Vec<_> = pop.iter().step_by(2).map(|p| p.z.clone()).collect();
        for i in 0..3 {
            for j in 0..i {
                assert!(base[i].dot(&base[j]).abs() < 1e-12);
            }
        }
        assert!(structured_sample(&s, 5, 5, true, true).is_err());
        assert_eq!(structured_sample(&s, 5, 5, false, true).unwrap(), sample_population(&s, 5, 5));
    }

    #[test]
    fn degenerate_limit_matches_plain_cma() {
        let f = Sphere::new(vec![0.3, -0.2, 0.1]);
        let p = default_params(3, 12).unwrap();
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
            max_generations: Some(15),
            seed: 4,
            ..Default::default()
        };
        let init = CmaState::new(vec![2.0; 3], 1.0).unwrap();
        let a = cma_optimize(&f, &IdentityMap, &p, init.clone(), &opts).unwrap();
        let b = race_cma_optimize(&f, &IdentityMap, &p, &racing, init, &opts).unwrap();
        assert_eq!(a.history.len(), b.reports.len());
        for (x, y) in a.history.iter().zip(&b.reports) {
            assert_eq!(x.mean, y.mean);
            assert_eq!(x.sigma, y.sigma);
        }
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn ten_generations_cost() {
        let f = NoisySphere::new(vec![0.0; 3], 0.1);
        let p = default_params(3, 12).unwrap();
        let init = CmaState::new(vec![1.0; 3], 0.5).unwrap();
        let opts = CmaOptions {
            budget: 1e6,
            ..Default::default()
        };
        let out = race_cma_optimize(&f, &IdentityMap, &p, &RacingConfig::default(), init.clone(), &opts).unwrap();
        assert_eq!(out.reports.len(), 10);
        assert_eq!(out.ledger.total, 84.0);
        let out = race_cma_optimize(&f, &IdentityMap, &p, &RacingConfig::benchmark(), init, &opts).unwrap();
        assert_eq!(out.ledger.total, 72.0);
        let mut buf = Vec::new();
        out.write_reports_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 11);
    }

    #[test]
    fn warmup_keeps_covariance_diagonal() {
        let f = Sphere::new(vec![0.0; 3]);
        let p = default_params(3, 12).unwrap();
        let racing = RacingConfig {
            diagonal_warmup_generations: 3,
            ..RacingConfig::default()
        };
        let ledger = CostLedger::new();
        let ev = Evaluator::new(&f, &ledger);
        let mut s = CmaState::new(vec![1.0, 2.0, -1.0], 0.5).unwrap();
        for _ in 0..3 {
            s = race_generation(&s, &p, &racing, &ev, &IdentityMap, 0).unwrap().0;
            let c = s.covariance();
            assert!((0..3).all(|i| (0..3).all(|j| i == j || c[(i, j)] == 0.0)));
        }
        s = race_generation(&s, &p, &racing, &ev, &IdentityMap, 0).unwrap().0;
        let c = s.covariance();
        assert!((0..3).any(|i| (0..3).any(|j| i != j && c[(i, j)] != 0.0)));
    }
}
