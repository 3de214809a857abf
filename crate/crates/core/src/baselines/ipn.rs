use nalgebra::{Matrix3, Vector3};

use super::{BaselineError, BaselineOutcome, IterationRecord};
use crate::feedback::ThresholdVector;
use crate::objective::{CostKind, CostLedger, Evaluator, StochasticObjective};
use crate::seed::{self, Stream};

/// `-ln(T2 - T1) - ln(T3 - T2)`, or `None` outside the open feasible set.
pub fn log_barrier(t: &[f64; 3]) -> Option<f64> {
    let (g1, g2) = (t[1] - t[0], t[2] - t[1]);
    (g1 > 0.0 && g2 > 0.0).then(|| -g1.ln() - g2.ln())
}

fn barrier_derivatives(t: &[f64; 3]) -> (Vector3<f64>, Matrix3<f64>) {
    let (a, b) = (1.0 / (t[1] - t[0]), 1.0 / (t[2] - t[1]));
    let grad = Vector3::new(a, b - a, -b);
    let (a2, b2) = (a * a, b * b);
    let hess = Matrix3::new(
        a2, -a2, 0.0, //
        -a2, a2 + b2, -b2, //
        0.0, -b2, b2,
    );
    (grad, hess)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpnConfig {
    pub mu0: f64,
    /// Barrier weight divisor per outer iteration.
    pub mu_shrink: f64,
    /// Central-difference step (RESI units).
    pub fd_step: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_line_search: usize,
    pub max_outer: Option<usize>,
    pub budget: f64,
    pub seed: u64,
}

impl Default for IpnConfig {
    fn default() -> Self {
        Self {
            mu0: 0.1,
            mu_shrink: 10.0,
            fd_step: 0.2,
            armijo: 1e-4,
            backtrack: 0.5,
            max_line_search: 20,
            max_outer: None,
            budget: 120.0,
            seed: 0,
        }
    }
}

/// Log-barrier Newton iterations with a 7-point central-difference stencil
/// (objective gradient and diagonal Hessian) and analytic barrier terms.
pub fn ipn_optimize<O: StochasticObjective + ?Sized>(
    objective: &O,
    t0: &ThresholdVector,
    cfg: &IpnConfig,
) -> Result<BaselineOutcome, BaselineError> {
    if !(cfg.mu0 > 0.0 && cfg.mu_shrink > 1.0 && cfg.fd_step > 0.0 && cfg.budget > 0.0) {
        return Err(BaselineError::Config("IPN needs mu0, fd_step, budget > 0 and mu_shrink > 1".into()));
    }
    let ledger = CostLedger::new();
    let eval = Evaluator::new(objective, &ledger);
    let mut t = t0.as_array();
    let mut mu = cfg.mu0;
    let mut history = Vec::new();
    let mut best: Option<(f64, [f64; 3])> = None;
    let consider = |v: f64, p: [f64; 3], best: &mut Option<(f64, [f64; 3])>| {
        if best.as_ref().is_none_or(|b| v < b.0) {
            *best = Some((v, p));
        }
    };

    let mut k = 0usize;
    while cfg.max_outer.is_none_or(|m| k < m) && ledger.fits(7.0, cfg.budget) {
        let s = seed::child(cfg.seed, Stream::Baseline, k as u64, 0);
        let f = |p: &[f64; 3]| eval.evaluate(p, s, 1.0, CostKind::Baseline);

        let h = cfg.fd_step.min(0.25 * (t[1] - t[0]).min(t[2] - t[1]));
        let j0 = f(&t)?;
        consider(j0, t, &mut best);
        let mut grad = Vector3::zeros();
        let mut hess = Matrix3::zeros();
        for i in 0..3 {
            let (mut up, mut dn) = (t, t);
            up[i] += h;
            dn[i] -= h;
            let (jp, jm) = (f(&up)?, f(&dn)?);
            grad[i] = (jp - jm) / (2.0 * h);
            hess[(i, i)] = (jp - 2.0 * j0 + jm) / (h * h);
        }
        let (bg, bh) = barrier_derivatives(&t);
        let phi0 = j0 + mu * log_barrier(&t).expect("iterate is strictly feasible");
        let g = grad + bg * mu;
        let mut hphi = hess + bh * mu;

        let mut ridge = 0.0;
        let dir = loop {
            if let Some(ch) = hphi.cholesky() {
                break ch.solve(&(-g));
            }
            let scale = hphi.diagonal().abs().max().max(1.0);
            let add = if ridge == 0.0 { 1e-8 * scale } else { ridge };
            hphi += Matrix3::identity() * add;
            ridge = 2.0 * add;
            if ridge > 1e12 * scale {
                return Err(BaselineError::Numerical("Newton system could not be regularized".into()));
            }
        };

        let slope = g.dot(&dir);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..cfg.max_line_search {
            let trial = [t[0] + alpha * dir[0], t[1] + alpha * dir[1], t[2] + alpha * dir[2]];
            if let Some(b) = log_barrier(&trial) {
                if !ledger.fits(1.0, cfg.budget) {
                    break;
                }
                let jt = f(&trial)?;
                consider(jt, trial, &mut best);
                if jt + mu * b <= phi0 + cfg.armijo * alpha * slope {
                    t = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= cfg.backtrack;
        }

        history.push(IterationRecord {
            iteration: k + 1,
            cost: j0,
            thresholds: t,
            n_eq: ledger.total(),
        });
        k += 1;
        mu /= cfg.mu_shrink;
        if !accepted {
            break;
        }
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
