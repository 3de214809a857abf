use isac_tune::baselines::{
    ipn_optimize, map_thresholds, posterior_crossing, spsa_gradient, spsa_optimize, Gaussian, HypothesisDensityModel,
    IpnConfig, SpsaConfig, SpsaSchedule,
};
use isac_tune::feedback::ThresholdVector;
use isac_tune::objective::{CostLedger, Evaluator, NoisySphere, ObjectiveError, StochasticObjective};
use proptest::prelude::*;

/// `(x - c)^T A (x - c)` with a fixed symmetric `A`.
#[derive(Debug)]
struct Quadratic {
    a: [[f64; 3]; 3],
    c: [f64; 3],
}

impl Quadratic {
    fn gradient(&self, x: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| 2.0 * (0..3).map(|j| self.a[i][j] * (x[j] - self.c[j])).sum::<f64>())
    }
}

impl StochasticObjective for Quadratic {
    fn dim(&self) -> usize {
        3
    }

    fn evaluate(&self, x: &[f64], _seed: u64, _fidelity: f64) -> Result<f64, ObjectiveError> {
        let d: Vec<f64> = x.iter().zip(&self.c).map(|(x, c)| x - c).collect();
        Ok((0..3).map(|i| (0..3).map(|j| d[i] * self.a[i][j] * d[j]).sum::<f64>()).sum())
    }
}

fn quadratic() -> impl Strategy<Value = Quadratic> {
    (prop::array::uniform3(0.1..3.0f64), prop::array::uniform3(-1.0..1.0f64), prop::array::uniform3(-5.0..5.0f64))
        .prop_map(|(d, o, c)| Quadratic {
            a: [[d[0], o[0], o[1]], [o[0], d[1], o[2]], [o[1], o[2], d[2]]],
            c,
        })
}

fn signs(pattern: u32) -> [f64; 3] {
    std::array::from_fn(|i| if pattern >> i & 1 == 1 { -1.0 } else { 1.0 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spsa_sign_average_is_the_gradient(q in quadratic(), t in prop::array::uniform3(-5.0..5.0f64), c in 0.01..1.0f64) {
        let mut avg = [0.0; 3];
        for p in 0..8 {
            let d = signs(p);
            let plus: Vec<f64> = (0..3).map(|i| t[i] + c * d[i]).collect();
            let minus: Vec<f64> = (0..3).map(|i| t[i] - c * d[i]).collect();
            let diff = q.evaluate(&plus, 0, 1.0).unwrap() - q.evaluate(&minus, 0, 1.0).unwrap();
            for i in 0..3 {
                avg[i] += diff / (2.0 * c * d[i]) / 8.0;
            }
        }
        let g = q.gradient(&t);
        let scale = g.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for i in 0..3 {
            prop_assert!((avg[i] - g[i]).abs() <= 1e-9 * scale, "{avg:?} vs {g:?}");
        }
    }

    #[test]
    fn spsa_step_costs_two_and_is_exact_when_projection_is_inactive(
        q in quadratic(), t1 in -3.0..3.0f64, g1 in 1.0..3.0f64, g2 in 1.0..3.0f64, c in 0.05..0.4f64,
    ) {
        let t = [t1, t1 + g1, t1 + g1 + g2];
        let ledger = CostLedger::new();
        let ev = Evaluator::new(&q, &ledger);
        let mut avg = [0.0; 3];
        for p in 0..8 {
            let d = signs(p);
            let g = spsa_gradient(&ev, &t, c, &d, 1, 0.1).unwrap();
            for i in 0..3 {
                avg[i] += g[i] / 8.0;
            }
        }
        prop_assert_eq!(ledger.total(), 16.0);
        let g = q.gradient(&t);
        let scale = g.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for i in 0..3 {
            prop_assert!((avg[i] - g[i]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn spsa_schedule_is_positive_and_decreasing(a in 0.01..2.0f64, big_a in 0.0..50.0f64, c in 0.01..1.0f64,
                                                alpha in 0.51..1.0f64, gamma in 0.01..0.49f64) {
        let s = SpsaSchedule { a, big_a, c, alpha, gamma };
        prop_assert!(s.validate().is_ok());
        for k in 0..200 {
            prop_assert!(s.gain(k) > 0.0 && s.perturbation(k) > 0.0);
            prop_assert!(s.gain(k + 1) < s.gain(k));
            prop_assert!(s.perturbation(k + 1) < s.perturbation(k));
        }
    }

    #[test]
    fn map_crossing_is_the_nearest_posterior_equality(
        m0 in -3.0..3.0f64, gap in 0.5..6.0f64, s0 in 0.3..2.0f64, s1 in 0.3..2.0f64, p0 in 0.05..0.95f64,
    ) {
        let (a, b) = (Gaussian { mean: m0, std: s0 }, Gaussian { mean: m0 + gap, std: s1 });
        let model = HypothesisDensityModel::new(vec![a, b], vec![p0, 1.0 - p0]).unwrap();
        let Ok(x) = posterior_crossing(a, p0, b, 1.0 - p0) else { return Ok(()); };
        prop_assert!(model.log_posterior_gap(0, x).abs() < 1e-8);
        // dense grid: the sign change closest to the midpoint of the means
        let mid = m0 + 0.5 * gap;
        let step = 1e-3;
        let mut best: Option<f64> = None;
        for i in -40_000i64..40_000 {
            let (u, v) = (mid + i as f64 * step, mid + (i + 1) as f64 * step);
            if model.log_posterior_gap(0, u).signum() != model.log_posterior_gap(0, v).signum() {
                let root = 0.5 * (u + v);
                if best.is_none_or(|r| (root - mid).abs() < (r - mid).abs()) {
                    best = Some(root);
                }
            }
        }
        if let Some(r) = best {
            prop_assert!((r - x).abs() <= step, "grid {r} vs closed form {x}");
        }
    }

    #[test]
    fn map_rule_is_deterministic_and_spaced(means in prop::array::uniform4(0.0..10.0f64), stds in prop::array::uniform4(0.2..2.0f64)) {
        let mut m = means;
        m.sort_by(f64::total_cmp);
        prop_assume!(m.windows(2).all(|w| w[1] - w[0] > 0.2));
        let dens: Vec<Gaussian> = (0..4).map(|i| Gaussian { mean: m[i], std: stds[i] }).collect();
        let model = HypothesisDensityModel::new(dens, vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        if let Ok(t) = map_thresholds(&model, 0.1) {
            prop_assert_eq!(t, map_thresholds(&model, 0.1).unwrap());
            prop_assert!(t.satisfies_spacing(0.1));
        }
    }

    #[test]
    fn ipn_iterates_stay_strictly_feasible(
        seed in any::<u64>(), t1 in 0.0..4.0f64, g1 in 0.2..3.0f64, g2 in 0.2..3.0f64, noise in 0.0..0.5f64,
    ) {
        let f = NoisySphere::new(vec![3.0, 4.5, 6.0], noise);
        let t0 = ThresholdVector::new(t1, t1 + g1, t1 + g1 + g2).unwrap();
        let cfg = IpnConfig { seed, budget: 60.0, ..IpnConfig::default() };
        let out = ipn_optimize(&f, &t0, &cfg).unwrap();
        for r in &out.history {
            prop_assert!(r.thresholds[1] > r.thresholds[0] && r.thresholds[2] > r.thresholds[1]);
        }
        prop_assert!(out.ledger.total <= 60.0);
        prop_assert!(out.history.windows(2).all(|w| w[1].n_eq >= w[0].n_eq));
    }

    #[test]
    fn spsa_respects_spacing_and_budget(seed in any::<u64>(), budget in 10u32..80) {
        let f = NoisySphere::new(vec![3.0, 4.5, 6.0], 0.2);
        let t0 = ThresholdVector::new(2.0, 2.5, 7.0).unwrap();
        let cfg = SpsaConfig { seed, budget: budget as f64, ..SpsaConfig::default() };
        let out = spsa_optimize(&f, &t0, &cfg).unwrap();
        prop_assert!(out.ledger.total <= budget as f64);
        prop_assert!(out.best_point.satisfies_spacing(cfg.min_spacing));
        for r in &out.history {
            prop_assert!(r.thresholds[1] - r.thresholds[0] >= cfg.min_spacing - 1e-12);
            prop_assert!(r.thresholds[2] - r.thresholds[1] >= cfg.min_spacing - 1e-12);
        }
    }
}

#[test]
fn ipn_stops_after_the_stencil_that_exhausts_the_budget() {
    let f = NoisySphere::new(vec![3.0, 4.5, 6.0], 0.1);
    let t0 = ThresholdVector::new(1.0, 3.0, 8.0).unwrap();
    let out = ipn_optimize(&f, &t0, &IpnConfig { budget: 7.0, ..IpnConfig::default() }).unwrap();
    assert!(out.ledger.total >= 7.0 && out.ledger.total <= 7.0 + 20.0);
    assert_eq!(out.ledger.baseline_count as f64, out.ledger.total);
}
