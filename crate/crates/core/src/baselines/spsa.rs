use rand::Rng;

use super::{BaselineError, BaselineOutcome, IterationRecord};
use crate::feedback::ThresholdVector;
use crate::objective::{CostKind, CostLedger, Evaluator, StochasticObjective};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpsaSchedule {
    pub a: f64,
    pub big_a: f64,
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for SpsaSchedule {
    fn default() -> Self {
        Self {
            a: 0.5,
            big_a: 10.0,
            c: 0.2,
            alpha: 0.602,
            gamma: 0.101,
        }
    }
}

impl SpsaSchedule {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.a > 0.0 && self.c > 0.0 && self.big_a >= 0.0) {
            return Err(BaselineError::Config("SPSA gains a, c must be positive".into()));
        }
        if !(self.alpha > 0.5 && self.alpha <= 1.0 && self.gamma > 0.0 && self.gamma < 0.5) {
            return Err(BaselineError::Config("SPSA exponents need alpha in (0.5, 1], gamma in (0, 0.5)".into()));
        }
        Ok(())
    }

    pub fn gain(&self, k: usize) -> f64 {
        self.a / (self.big_a + k as f64 + 1.0).powf(self.alpha)
    }

    pub fn perturbation(&self, k: usize) -> f64 {
        self.c / (k as f64 + 1.0).powf(self.gamma)
    }
}

/// Sorts ascending, then pushes later entries up to keep spacing `delta`.
pub fn project(v: [f64; 3], delta: f64) -> [f64; 3] {
    let mut t = v;
    t.sort_by(f64::total_cmp);
    for i in 1..3 {
        if t[i] - t[i - 1] < delta {
            t[i] = t[i - 1] + delta;
            while t[i] - t[i - 1] < delta {
                t[i] = t[i].next_up();
            }
        }
    }
    t
}

/// Two-sided simultaneous-perturbation gradient; both evaluations share `seed`.
pub fn spsa_gradient<O: StochasticObjective + ?Sized>(
    eval: &Evaluator<'_, O>,
    t: &[f64; 3],
    c: f64,
    delta_signs: &[f64; 3],
    seed: u64,
    min_spacing: f64,
) -> Result<[f64; 3], BaselineError> {
    let plus = project(std::array::from_fn(|i| t[i] + c * delta_signs[i]), min_spacing);
    let minus = project(std::array::from_fn(|i| t[i] - c * delta_signs[i]), min_spacing);
    let jp = eval.evaluate(&plus, seed, 1.0, CostKind::Baseline)?;
    let jm = eval.evaluate(&minus, seed, 1.0, CostKind::Baseline)?;
    Ok(std::array::from_fn(|i| (jp - jm) / (2.0 * c * delta_signs[i])))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpsaConfig {
    pub schedule: SpsaSchedule,
    pub min_spacing: f64,
    /// Iterations between full-fidelity probes of the iterate.
    pub probe_every: usize,
    pub max_iterations: Option<usize>,
    pub budget: f64,
    pub seed: u64,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            schedule: SpsaSchedule::default(),
            min_spacing: 0.1,
            probe_every: 10,
            max_iterations: None,
            budget: 120.0,
            seed: 0,
        }
    }
}

pub fn spsa_optimize<O: StochasticObjective + ?Sized>(
    objective: &O,
    t0: &ThresholdVector,
    cfg: &SpsaConfig,
) -> Result<BaselineOutcome, BaselineError> {
    cfg.schedule.validate()?;
    if !(cfg.budget > 0.0 && cfg.probe_every > 0) {
        return Err(BaselineError::Config("SPSA needs a positive budget and probe period".into()));
    }
    let ledger = CostLedger::new();
    let eval = Evaluator::new(objective, &ledger);
    let mut t = project(t0.as_array(), cfg.min_spacing);
    let mut history = Vec::new();
    let mut best: Option<(f64, [f64; 3])> = None;

    let mut k = 0usize;
    while cfg.max_iterations.is_none_or(|m| k < m) && ledger.fits(2.0, cfg.budget) {
        let s = seed::child(cfg.seed, Stream::Baseline, k as u64, 0);
        let mut rng = seed::rng(seed::child(cfg.seed, Stream::Baseline, k as u64, 1));
        let signs: [f64; 3] = std::array::from_fn(|_| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let ghat = spsa_gradient(&eval, &t, cfg.schedule.perturbation(k), &signs, s, cfg.min_spacing)?;
        let a = cfg.schedule.gain(k);
        t = project(std::array::from_fn(|i| t[i] - a * ghat[i]), cfg.min_spacing);
        k += 1;

        let mut cost = f64::NAN;
        if k % cfg.probe_every == 0 && ledger.fits(1.0, cfg.budget) {
            let ps = seed::child(cfg.seed, Stream::Baseline, k as u64, 2);
            cost = eval.evaluate(&t, ps, 1.0, CostKind::Baseline)?;
            if best.as_ref().is_none_or(|b| cost < b.0) {
                best = Some((cost, t));
            }
        }
        history.push(IterationRecord {
            iteration: k,
            cost,
            thresholds: t,
            n_eq: ledger.total(),
        });
    }

    let (best_cost, p) = best.unwrap_or((f64::NAN, t));
    Ok(BaselineOutcome {
        best_point: ThresholdVector::new(p[0], p[1], p[2])?,
        best_cost,
        final_point: ThresholdVector::new(t[0], t[1], t[2])?,
        ledger: ledger.snapshot(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{ObjectiveError, Sphere};
    use approx::assert_relative_eq;

    struct Linear;
    impl StochasticObjective for Linear {
        fn dim(&self) -> usize {
            3
        }
        fn evaluate(&self, p: &[f64], _: u64, _: f64) -> Result<f64, ObjectiveError> {
            Ok(2.0 * p[0] - 3.0 * p[1] + 0.5 * p[2])
        }
    }

    fn sign_patterns() -> Vec<[f64; 3]> {
        (0..8)
            .map(|b| std::array::from_fn(|i| if b >> i & 1 == 1 { 1.0 } else { -1.0 }))
            .collect()
    }

    #[test]
    fn gradient_on_quadratic() {
        let f = Sphere::new(vec![0.0; 3]);
        let ledger = CostLedger::new();
        let ev = Evaluator::new(&f, &ledger);
        // far from the spacing limit, so projection is inactive
        let t = [1.0, 1.0, 1.0];
        let g = |d: &[f64; 3]| {
            let plus: [f64; 3] = std::array::from_fn(|i| t[i] + 0.1 * d[i]);
            let minus: [f64; 3] = std::array::from_fn(|i| t[i] - 0.1 * d[i]);
            let (jp, jm) = (f.value(&plus), f.value(&minus));
            std::array::from_fn::<f64, 3, _>(|i| (jp - jm) / (0.2 * d[i]))
        };
        assert_eq!(g(&[1.0, -1.0, 1.0]).map(|x| (x * 1e9).round() / 1e9), [2.0, -2.0, 2.0]);
        let mut mean = [0.0; 3];
        for d in sign_patterns() {
            let gi = g(&d);
            for i in 0..3 {
                mean[i] += gi[i] / 8.0;
            }
        }
        for m in mean {
            assert!((m - 2.0).abs() < 1e-12);
        }
        let sep = [1.0, 2.0, 3.0];
        let est = spsa_gradient(&ev, &sep, 0.1, &[1.0, -1.0, 1.0], 0, 0.1).unwrap();
        assert_eq!(ledger.total(), 2.0);
        assert!(est.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn exact_on_linear() {
        let ledger = CostLedger::new();
        let ev = Evaluator::new(&Linear, &ledger);
        for d in sign_patterns() {
            let g = spsa_gradient(&ev, &[0.0, 5.0, 10.0], 0.1, &d, 0, 0.1).unwrap();
            let expect: [f64; 3] = std::array::from_fn(|i| {
                let w = [2.0, -3.0, 0.5];
                (0..3).map(|j| w[j] * d[j]).sum::<f64>() / d[i]
            });
            for i in 0..3 {
                assert_relative_eq!(g[i], expect[i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn projection_sorts_then_spaces() {
        let p = project([4.0, 3.9, 7.0], 0.1);
        assert_eq!(p, [3.9, 4.0, 7.0]);
        let p = project([1.0, 1.0, 1.0], 0.1);
        assert!(p[1] - p[0] >= 0.1 && p[2] - p[1] >= 0.1);
    }

    #[test]
    fn budget_twenty_gives_ten_iterations() {
        let f = Sphere::new(vec![3.0, 5.0, 7.0]);
        let cfg = SpsaConfig {
            budget: 20.0,
            ..SpsaConfig::default()
        };
        let out = spsa_optimize(&f, &ThresholdVector::new(2.0, 4.0, 6.0).unwrap(), &cfg).unwrap();
        assert_eq!(out.history.len(), 10);
        assert_eq!(out.ledger.total, 20.0);
    }

    #[test]
    fn converges_on_noiseless_quadratic() {
        let f = Sphere::new(vec![3.0, 5.0, 7.0]);
        let mut errs: Vec<f64> = (0..20)
            .map(|s| {
                let cfg = SpsaConfig {
                    budget: 1e9,
                    max_iterations: Some(1000),
                    seed: s,
                    ..SpsaConfig::default()
                };
                let out = spsa_optimize(&f, &ThresholdVector::new(2.0, 4.0, 6.0).unwrap(), &cfg).unwrap();
                f.value(&out.final_point.as_array()).sqrt()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        assert!(errs[10] < 0.1, "median error {}", errs[10]);
    }
}
