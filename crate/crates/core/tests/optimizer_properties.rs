use isac_tune::cma::{cma_optimize, default_params, effective_mass, CmaOptions, CmaState, IdentityMap};
use isac_tune::feedback::{EpisodeRunner, StateActionTable, Weights};
use isac_tune::objective::{
    derive_seed_plan, CostLedger, Evaluator, IsacObjective, NoisySphere, ObjectiveError, Sphere, StochasticObjective,
};
use isac_tune::race::{promote, race_cma_optimize, race_generation, stage1_screen, structured_sample, RacingConfig};
use isac_tune::seed::{self, Stream};
use isac_tune::sim::ScenarioConfig;
use nalgebra::DVector;
use proptest::prelude::*;

fn isac(power_dbm: f64) -> IsacObjective {
    let sc = ScenarioConfig {
        tx_power_dbm: power_dbm,
        ..ScenarioConfig::default()
    };
    let runner = EpisodeRunner::new(sc.clone(), sc.geometry(), StateActionTable::default()).unwrap();
    IsacObjective::new(runner, Weights::new(1.0, 0.5, 0.0)).unwrap()
}

/// Cost that ranks candidates at random: a hash of the point and seed.
struct RandomRanking;

impl StochasticObjective for RandomRanking {
    fn dim(&self) -> usize {
        3
    }

    fn evaluate(&self, point: &[f64], seed: u64, _fidelity: f64) -> Result<f64, ObjectiveError> {
        let mut parts = vec![seed];
        parts.extend(point.iter().map(|x| x.to_bits()));
        Ok(seed::derive(&parts) as f64)
    }
}

struct Transformed<O>(O, fn(f64) -> f64);

impl<O: StochasticObjective> StochasticObjective for Transformed<O> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn evaluate(&self, point: &[f64], seed: u64, fidelity: f64) -> Result<f64, ObjectiveError> {
        Ok((self.1)(self.0.evaluate(point, seed, fidelity)?))
    }
}

fn opts(seed: u64, generations: usize) -> CmaOptions {
    CmaOptions {
        budget: 1e12,
        max_generations: Some(generations),
        min_sigma: 0.0,
        seed,
    }
}

#[test]
fn isac_evaluation_is_referentially_transparent() {
    let f = isac(24.7);
    let a = [3.0, 4.5, 6.0];
    let b = [2.0, 5.0, 5.5];
    let first = f.evaluate(&a, 17, 1.0).unwrap();
    for s in 0..5 {
        f.evaluate(&b, s, 0.4).unwrap();
    }
    assert_eq!(f.evaluate(&a, 17, 1.0).unwrap(), first);
    assert_eq!(f.evaluate(&a, 17, 0.3).unwrap(), f.evaluate(&a, 17, 0.3).unwrap());
}

#[test]
fn common_seeds_reduce_difference_variance() {
    let f = isac(24.7);
    let t = [3.0, 4.5, 6.0];
    let t2 = [3.2, 4.6, 6.1];
    let n = 150u64;
    let var = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let mut common = Vec::new();
    let mut independent = Vec::new();
    for s in 0..n {
        let a = seed::child(5, Stream::Evaluation, s, 0);
        let b = seed::child(5, Stream::Evaluation, s + n, 0);
        common.push(f.evaluate(&t, a, 1.0).unwrap() - f.evaluate(&t2, a, 1.0).unwrap());
        independent.push(f.evaluate(&t, a, 1.0).unwrap() - f.evaluate(&t2, b, 1.0).unwrap());
    }
    let (vc, vi) = (var(&common), var(&independent));
    assert!(vc <= 0.7 * vi, "common {vc} vs independent {vi}");
}

fn log_sigma_after(generations: usize, trials: u64) -> Vec<f64> {
    let p = default_params(3, 12).unwrap();
    (0..trials)
        .map(|trial| {
            let init = CmaState::new(vec![0.0; 3], 1.0).unwrap();
            let out = cma_optimize(&RandomRanking, &IdentityMap, &p, init, &opts(trial, generations)).unwrap();
            assert_eq!(out.history.len(), generations);
            out.state.sigma().ln()
        })
        .collect()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

// Random ranking: log sigma is a driftless walk whose spread grows like sqrt(G).
#[test]
fn step_size_is_an_unbiased_random_walk_under_random_ranking() {
    let short = log_sigma_after(50, 50);
    let long = log_sigma_after(200, 50);
    let (m50, sd50) = mean_sd(&short);
    let (m200, sd200) = mean_sd(&long);
    assert!(m50.abs() < 3.0 * sd50 / 50f64.sqrt(), "drift {m50} (sd {sd50})");
    assert!(m200.abs() < 3.0 * sd200 / 50f64.sqrt(), "drift {m200} (sd {sd200})");
    let growth = sd200 / sd50;
    assert!((1.4..2.8).contains(&growth), "spread ratio {growth}");
    let within = short.iter().filter(|x| x.abs() < 3.0).count();
    assert!(within >= 47, "{within}/50 within |log sigma| < 3 after 50 generations");
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

/// N_eq at the first generation whose mean has true sphere cost below `target`.
fn n_eq_to_reach(means: impl Iterator<Item = (Vec<f64>, f64)>, target: f64) -> f64 {
    means
        .filter(|(m, _)| m.iter().map(|x| x * x).sum::<f64>() < target)
        .map(|(_, n)| n)
        .next()
        .unwrap_or(f64::INFINITY)
}

#[test]
fn racing_reaches_noisy_sphere_target_cheaper_than_plain_cma() {
    let f = NoisySphere::new(vec![0.0; 3], 0.1);
    let p = default_params(3, 12).unwrap();
    let (mut cma, mut race) = (Vec::new(), Vec::new());
    for s in 0..20 {
        let init = CmaState::new(vec![1.0; 3], 0.5).unwrap();
        let a = cma_optimize(&f, &IdentityMap, &p, init.clone(), &opts(s, 300)).unwrap();
        let b = race_cma_optimize(&f, &IdentityMap, &p, &RacingConfig::default(), init, &opts(s, 300)).unwrap();
        cma.push(n_eq_to_reach(a.history.into_iter().map(|h| (h.mean, h.n_eq)), 0.05));
        race.push(n_eq_to_reach(b.reports.into_iter().map(|h| (h.mean, h.n_eq)), 0.05));
    }
    let (c, r) = (median(cma), median(race));
    assert!(c.is_finite() && r <= 0.6 * c, "median N_eq RACE-CMA {r} vs CMA-ES {c}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ledger_increment_matches_closed_form(
        half in 2usize..16, tau10 in 1u32..=10, rho10 in 1u32..=10, r in 1usize..4, seed in any::<u64>(),
    ) {
        let lambda = 2 * half;
        let racing = RacingConfig {
            fidelity_ratio: tau10 as f64 / 10.0,
            promotion_fraction: rho10 as f64 / 10.0,
            repetitions: r,
            ..RacingConfig::default()
        };
        let p = default_params(3, lambda).unwrap();
        let f = NoisySphere::new(vec![0.0; 3], 0.2);
        let ledger = CostLedger::new();
        let ev = Evaluator::new(&f, &ledger);
        let s = CmaState::new(vec![1.0, -1.0, 0.5], 0.7).unwrap();
        let (_, report, _) = race_generation(&s, &p, &racing, &ev, &IdentityMap, seed).unwrap();
        let k = ((lambda * rho10 as usize) / 10).max(1);
        let tenths = lambda * tau10 as usize + 10 * k * r;
        prop_assert_eq!(report.promoted.len(), k);
        prop_assert_eq!(ledger.total(), tenths as f64 / 10.0);
        prop_assert_eq!(report.ledger_delta, tenths as f64 / 10.0);
        let ratio = racing.generation_cost(lambda) / lambda as f64;
        let bound = tau10 as f64 / 10.0 + (k * r) as f64 / lambda as f64;
        prop_assert!((ratio - bound).abs() < 1e-12);
        prop_assert_eq!(ratio < 1.0, tenths < 10 * lambda);
        prop_assert!((report.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mirrored_draws_cancel(half in 1usize..12, seed in any::<u64>(), ortho in any::<bool>()) {
        let s = CmaState::new(vec![0.3, 2.0, -1.0], 1.3).unwrap();
        let pop = structured_sample(&s, 2 * half, seed, true, ortho).unwrap();
        let sum = pop.iter().fold(DVector::zeros(3), |acc, p| acc + &p.z);
        prop_assert_eq!(sum, DVector::zeros(3));
    }

    #[test]
    fn common_noise_keeps_stage1_ranking(seed in any::<u64>(), g in 0u64..1000) {
        let f = NoisySphere::new(vec![0.0; 3], 0.5);
        let ledger = CostLedger::new();
        let ev = Evaluator::new(&f, &ledger);
        let mut rng = seed::rng(seed);
        let pts: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..3).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect())
            .collect();
        let truth: Vec<f64> = pts.iter().map(|p| f.sphere.value(p)).collect();
        let noisy = stage1_screen(&ev, &pts, &derive_seed_plan(seed, g, 1), 0.2).unwrap();
        prop_assert_eq!(promote(&noisy, 12), promote(&truth, 12));
    }

    #[test]
    fn degenerate_racing_reproduces_cma(seed in any::<u64>(), m in prop::collection::vec(-3.0..3.0f64, 3), sigma in 0.1..2.0f64) {
        let f = Sphere::new(vec![0.5, 0.0, -0.5]);
        let p = default_params(3, 10).unwrap();
        let racing = RacingConfig {
            promotion_fraction: 1.0,
            fidelity_ratio: 1.0,
            truncation: 1.0,
            repetitions: 1,
            diagonal_warmup_generations: 0,
            mirrored_sampling: false,
            ..RacingConfig::default()
        };
        let init = CmaState::new(m, sigma).unwrap();
        let a = cma_optimize(&f, &IdentityMap, &p, init.clone(), &opts(seed, 8)).unwrap();
        let b = race_cma_optimize(&f, &IdentityMap, &p, &racing, init, &opts(seed, 8)).unwrap();
        for (x, y) in a.history.iter().zip(&b.reports) {
            prop_assert_eq!(&x.mean, &y.mean);
        }
        prop_assert_eq!(a.state, b.state);
    }

    #[test]
    fn covariance_stays_symmetric_pd(seed in any::<u64>(), noise in 0.0..2.0f64) {
        let f = NoisySphere::new(vec![1.0, -2.0, 0.5], noise);
        let p = default_params(3, 12).unwrap();
        let mut s = CmaState::new(vec![0.0; 3], 1.0).unwrap();
        for g in 0..60 {
            s = cma_optimize(&f, &IdentityMap, &p, s, &opts(seed, g + 1)).unwrap().state;
            prop_assert!(s.covariance_is_valid());
            prop_assert!(s.min_eigenvalue() > 1e-14);
            prop_assert!(s.sigma() > 0.0);
            prop_assert_eq!(s.mean().len(), 3);
        }
    }

    #[test]
    fn state_depends_only_on_ranks(seed in any::<u64>(), which in 0usize..3) {
        let transforms: [fn(f64) -> f64; 3] = [|v| v.exp(), |v| 5.0 * v - 2.0, |v| v.atan() + v.powi(3)];
        let f = NoisySphere::new(vec![0.2, 0.1, -0.4], 0.3);
        let p = default_params(3, 12).unwrap();
        let init = CmaState::new(vec![1.0, 1.0, 1.0], 0.6).unwrap();
        let a = cma_optimize(&f, &IdentityMap, &p, init.clone(), &opts(seed, 25)).unwrap();
        let b = cma_optimize(&Transformed(f.clone(), transforms[which]), &IdentityMap, &p, init, &opts(seed, 25)).unwrap();
        for (x, y) in a.history.iter().zip(&b.history) {
            prop_assert_eq!(&x.mean, &y.mean);
            prop_assert_eq!(x.sigma, y.sigma);
        }
        prop_assert_eq!(a.state, b.state);
    }

    #[test]
    fn translation_equivariance(seed in any::<u64>(), shift in prop::collection::vec(-20.0..20.0f64, 3)) {
        let center = vec![0.2, 0.1, -0.4];
        let moved: Vec<f64> = center.iter().zip(&shift).map(|(c, s)| c + s).collect();
        let p = default_params(3, 12).unwrap();
        let m0 = vec![1.0, 1.0, 1.0];
        let m1: Vec<f64> = m0.iter().zip(&shift).map(|(m, s)| m + s).collect();
        let a = cma_optimize(&NoisySphere::new(center, 0.1), &IdentityMap, &p, CmaState::new(m0, 0.6).unwrap(), &opts(seed, 25)).unwrap();
        let b = cma_optimize(&NoisySphere::new(moved, 0.1), &IdentityMap, &p, CmaState::new(m1, 0.6).unwrap(), &opts(seed, 25)).unwrap();
        for (x, y) in a.history.iter().zip(&b.history) {
            for i in 0..3 {
                prop_assert!((y.mean[i] - x.mean[i] - shift[i]).abs() < 1e-9);
            }
            prop_assert!((y.sigma / x.sigma - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn default_weights_invariants(n in 1usize..12, lambda in 2usize..64) {
        let p = default_params(n, lambda).unwrap();
        prop_assert!(p.mu <= p.lambda && p.mu >= 1);
        prop_assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.weights.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(p.weights.iter().all(|&w| w > 0.0));
        let me = effective_mass(&p.weights);
        prop_assert!(me >= 1.0 - 1e-12 && me <= p.mu as f64 + 1e-12);
        prop_assert!(p.c1 + p.c_mu <= 1.0);
    }
}
