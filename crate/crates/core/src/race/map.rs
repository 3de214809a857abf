use serde::{Deserialize, Serialize};

use crate::cma::SearchMap;
use crate::feedback::{EpisodeRunner, FeedbackError, ThresholdVector};
use crate::seed::{self, Stream};

/// `ln(1 + e^x)` without overflow or loss for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Smallest value `>= base + delta` whose difference from `base` is still
/// `>= delta` after rounding.
fn spaced(base: f64, candidate: f64, delta: f64) -> f64 {
    let mut t = candidate;
    while t - base < delta {
        t = t.next_up();
    }
    t
}

/// Empirical CDF of RESI values with linear interpolation between order
/// statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self, FeedbackError> {
        samples.retain(|x| x.is_finite());
        if samples.len() < 2 {
            return Err(FeedbackError::Config(
                "an empirical CDF needs at least two finite samples".into(),
            ));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `F^{-1}(q)` for `q` in `[0, 1]` (clamped).
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (pos.floor() as usize).min(n - 2);
        let frac = pos - i as f64;
        self.sorted[i] + frac * (self.sorted[i + 1] - self.sorted[i])
    }

    /// `F(x)`, the inverse of [`quantile`](Self::quantile) on the sample range.
    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.sorted.len();
        if x <= self.sorted[0] {
            return 0.0;
        }
        if x >= self.sorted[n - 1] {
            return 1.0;
        }
        let i = self.sorted.partition_point(|&s| s <= x) - 1;
        let (a, b) = (self.sorted[i], self.sorted[i + 1]);
        let frac = if b > a { (x - a) / (b - a) } else { 0.0 };
        (i as f64 + frac) / (n - 1) as f64
    }
}

/// RESI values of `frames` sensing frames from episodes that never leave the
/// search state, at the given fidelity.
pub fn calibrate_resi_cdf(
    runner: &EpisodeRunner,
    frames: usize,
    fidelity: f64,
    seed: u64,
) -> Result<EmpiricalCdf, FeedbackError> {
    let never = ThresholdVector::new(f64::MAX / 4.0, f64::MAX / 2.0, f64::MAX)?;
    let mut samples = Vec::with_capacity(frames);
    let mut episode = 0u64;
    while samples.len() < frames {
        let trace = runner.run(&never, seed::child(seed, Stream::Calibration, episode, 0), fidelity)?;
        samples.extend(trace.resi.iter().take(frames - samples.len()));
        episode += 1;
    }
    EmpiricalCdf::new(samples)
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapMode {
    /// `T1 = u1`, `T_{i+1} = T_i + delta + softplus(u_{i+1})`.
    Softplus,
    /// Ordered quantile levels mapped through an empirical RESI CDF.
    Quantile(EmpiricalCdf),
}

/// Unconstrained `u` in R^3 to a threshold vector with spacing `>= delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleMap {
    pub delta: f64,
    pub mode: MapMode,
}

impl FeasibleMap {
    pub fn softplus(delta: f64) -> Result<Self, FeedbackError> {
        Self::checked(delta, MapMode::Softplus)
    }

    pub fn quantile(delta: f64, cdf: EmpiricalCdf) -> Result<Self, FeedbackError> {
        Self::checked(delta, MapMode::Quantile(cdf))
    }

    fn checked(delta: f64, mode: MapMode) -> Result<Self, FeedbackError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(FeedbackError::Config(format!("minimum spacing {delta} must be positive")));
        }
        Ok(Self { delta, mode })
    }

    /// Quantile levels `q1 <= q2 <= q3` in `(0, 1)`.
    fn levels(u: &[f64]) -> [f64; 3] {
        let q1 = logistic(u[0]);
        let q2 = q1 + (1.0 - q1) * logistic(u[1]);
        let q3 = q2 + (1.0 - q2) * logistic(u[2]);
        [q1, q2, q3]
    }

    pub fn apply(&self, u: &[f64]) -> ThresholdVector {
        assert_eq!(u.len(), 3, "feasible map expects a 3-vector");
        let d = self.delta;
        let (t1, t2, t3) = match &self.mode {
            MapMode::Softplus => {
                let t1 = u[0];
                let t2 = spaced(t1, t1 + d + softplus(u[1]), d);
                let t3 = spaced(t2, t2 + d + softplus(u[2]), d);
                (t1, t2, t3)
            }
            MapMode::Quantile(cdf) => {
                let q = Self::levels(u);
                let t1 = cdf.quantile(q[0]);
                let t2 = spaced(t1, cdf.quantile(q[1]) + d, d);
                let t3 = spaced(t2, cdf.quantile(q[2]) + 2.0 * d, d);
                (t1, t2, t3)
            }
        };
        ThresholdVector::new(t1, t2, t3).expect("spaced thresholds are strictly increasing")
    }

    /// A preimage of `t`; gaps at or below `delta` are lifted slightly.
    pub fn invert(&self, t: &ThresholdVector) -> Vec<f64> {
        let d = self.delta;
        let [t1, t2, t3] = t.as_array();
        match &self.mode {
            MapMode::Softplus => {
                let g = |gap: f64| softplus_inv((gap - d).max(1e-6));
                vec![t1, g(t2 - t1), g(t3 - t2)]
            }
            MapMode::Quantile(cdf) => {
                let clamp = |q: f64| q.clamp(1e-6, 1.0 - 1e-6);
                let q1 = clamp(cdf.cdf(t1));
                let q2 = clamp(cdf.cdf(t2 - d).max(q1 + 1e-6));
                let q3 = clamp(cdf.cdf(t3 - 2.0 * d).max(q2 + 1e-6));
                let s2 = clamp((q2 - q1) / (1.0 - q1));
                let s3 = clamp((q3 - q2) / (1.0 - q2));
                vec![logit(q1), logit(s2), logit(s3)]
            }
        }
    }
}

impl SearchMap for FeasibleMap {
    fn map(&self, u: &[f64]) -> Vec<f64> {
        self.apply(u).as_array().to_vec()
    }
}
