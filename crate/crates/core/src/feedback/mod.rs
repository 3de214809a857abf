//! Threshold state machine, closed-loop episodes and the three sensing
//! objectives (detection reliability, latency, power overhead).

mod episode;
mod thresholds;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimError;

pub use episode::{frames_at_fidelity, run_episode, EpisodeRunner, EpisodeTrace, StateActionTable};
pub use thresholds::{classify, HypothesisState, ThresholdVector};

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("infeasible threshold vector: {0}")]
    Infeasible(String),
    #[error("invalid feedback configuration: {0}")]
    Config(String),
    #[error("fidelity must lie in (0, 1], got {0}")]
    Fidelity(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Detection reliability with a flag for episodes where the target never
/// entered the sensing region (value reported as 1 by convention).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reliability {
    pub value: f64,
    pub vacuous: bool,
}

/// `sum_t [in_beam ∧ x_t > T1] / sum_t [in_region]`
pub fn detection_reliability(trace: &EpisodeTrace, t: &ThresholdVector) -> Reliability {
    let denom = trace.in_region.iter().filter(|&&r| r).count();
    if denom == 0 {
        return Reliability {
            value: 1.0,
            vacuous: true,
        };
    }
    let hits = trace
        .in_beam
        .iter()
        .zip(&trace.resi)
        .filter(|(&b, &x)| b && x > t.t1())
        .count();
    Reliability {
        value: (hits as f64 / denom as f64).min(1.0),
        vacuous: false,
    }
}

/// Frames the target spends in the region without the loop having reached
/// the top state; the full horizon when no frame ever crossed `T1`.
pub fn sensing_latency(trace: &EpisodeTrace, t: &ThresholdVector) -> f64 {
    if !trace.resi.iter().any(|&x| x > t.t1()) {
        return trace.horizon() as f64;
    }
    trace
        .in_region
        .iter()
        .zip(&trace.states)
        .filter(|(&r, s)| r && **s < HypothesisState::TOP)
        .count() as f64
}

/// Mean sensing power as a fraction of the budget.
pub fn power_overhead(trace: &EpisodeTrace) -> f64 {
    if trace.power.is_empty() {
        return 0.0;
    }
    trace.power.iter().sum::<f64>() / trace.power.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValues {
    pub j_det: f64,
    /// Frames.
    pub j_lat: f64,
    pub j_pow: f64,
    /// Horizon `T_S` in frames.
    pub horizon: usize,
    pub vacuous: bool,
}

impl ObjectiveValues {
    pub fn from_trace(trace: &EpisodeTrace, t: &ThresholdVector) -> Self {
        let det = detection_reliability(trace, t);
        Self {
            j_det: det.value,
            j_lat: sensing_latency(trace, t),
            j_pow: power_overhead(trace),
            horizon: trace.horizon(),
            vacuous: det.vacuous,
        }
    }

    pub fn normalized_latency(&self) -> f64 {
        self.j_lat / self.horizon.max(1) as f64
    }
}

/// Scalarization weights for `(1 - J_det, J_lat / T_S, J_pow)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub det: f64,
    pub lat: f64,
    pub pow: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            det: 1.0,
            lat: 0.0,
            pow: 0.0,
        }
    }
}

impl Weights {
    pub fn new(det: f64, lat: f64, pow: f64) -> Self {
        Self { det, lat, pow }
    }

    pub fn validate(&self) -> Result<(), FeedbackError> {
        let w = [self.det, self.lat, self.pow];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(FeedbackError::Config("weights must be finite and >= 0".into()));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(FeedbackError::Config("at least one weight must be positive".into()));
        }
        Ok(())
    }
}

pub fn scalarize(values: &ObjectiveValues, weights: &Weights) -> Result<f64, FeedbackError> {
    weights.validate()?;
    Ok(weights.det * (1.0 - values.j_det)
        + weights.lat * values.normalized_latency()
        + weights.pow * values.j_pow)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(resi: &[f64], states: &[u8], in_region: &[bool], in_beam: &[bool]) -> EpisodeTrace {
        EpisodeTrace {
            resi: resi.to_vec(),
            states: states.iter().map(|&s| HypothesisState::new(s).unwrap()).collect(),
            in_region: in_region.to_vec(),
            in_beam: in_beam.to_vec(),
            power: vec![1.0; resi.len()],
            beams: vec![0; resi.len()],
        }
    }

    fn t357() -> ThresholdVector {
        ThresholdVector::new(3.0, 5.0, 7.0).unwrap()
    }

    #[test]
    fn reliability_full_partial_and_vacuous() {
        let n = 10;
        let tr = trace(&vec![8.0; n], &vec![3; n], &vec![true; n], &vec![true; n]);
        assert_eq!(detection_reliability(&tr, &t357()).value, 1.0);

        let resi: Vec<f64> = (0..n).map(|i| if i < 4 { 6.0 } else { 1.0 }).collect();
        let tr = trace(&resi, &vec![0; n], &vec![true; n], &vec![true; n]);
        assert!((detection_reliability(&tr, &t357()).value - 0.4).abs() < 1e-15);

        let tr = trace(&vec![8.0; n], &vec![3; n], &vec![false; n], &vec![false; n]);
        let r = detection_reliability(&tr, &t357());
        assert_eq!(r.value, 1.0);
        assert!(r.vacuous);
    }

    #[test]
    fn latency_cases() {
        let n = 10;
        let tr = trace(&vec![1.0; n], &vec![0; n], &vec![true; n], &vec![true; n]);
        assert_eq!(sensing_latency(&tr, &t357()), n as f64);

        let tr = trace(&vec![8.0; n], &vec![3; n], &vec![true; n], &vec![true; n]);
        assert_eq!(sensing_latency(&tr, &t357()), 0.0);

        // oracle: enumerate in-region frames below the top state
        let states = [1u8, 1, 2, 2, 3, 3, 3, 3, 3, 3];
        let resi: Vec<f64> = states.iter().map(|&s| [1.0, 4.0, 6.0, 8.0][s as usize]).collect();
        let tr = trace(&resi, &states, &vec![true; n], &vec![true; n]);
        let expected = states.iter().filter(|&&s| s < 3).count() as f64;
        assert_eq!(sensing_latency(&tr, &t357()), expected);
        assert_eq!(expected, 4.0);
    }

    #[test]
    fn power_overhead_is_mean() {
        let mut tr = trace(&[0.0; 4], &[0; 4], &[true; 4], &[true; 4]);
        tr.power = vec![0.5; 4];
        assert_eq!(power_overhead(&tr), 0.5);
        tr.power = vec![0.0, 1.0, 0.0, 1.0];
        assert_eq!(power_overhead(&tr), 0.5);
    }

    #[test]
    fn scalarization_cases() {
        let v = |d, l, p| ObjectiveValues {
            j_det: d,
            j_lat: l,
            j_pow: p,
            horizon: 100,
            vacuous: false,
        };
        let w = Weights::default();
        assert_eq!(scalarize(&v(1.0, 0.0, 0.0), &w).unwrap(), 0.0);
        assert!((scalarize(&v(0.6, 0.0, 0.0), &w).unwrap() - 0.4).abs() < 1e-15);
        let all = Weights::new(1.0, 1.0, 1.0);
        assert!((scalarize(&v(0.8, 50.0, 0.5), &all).unwrap() - 1.2).abs() < 1e-12);
        assert!(scalarize(&v(0.8, 50.0, 0.5), &Weights::new(0.0, 0.0, 0.0)).is_err());
        assert!(scalarize(&v(0.8, 50.0, 0.5), &Weights::new(-1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn raising_t1_never_adds_detections() {
        let resi = [0.5, 2.9, 3.1, 4.0, 6.5, 7.2, 2.0];
        let tr = trace(&resi, &[0; 7], &[true; 7], &[true; 7]);
        let mut prev = f64::INFINITY;
        for t1 in [0.0, 1.0, 3.0, 3.5, 5.0, 7.0] {
            let t = ThresholdVector::new(t1, t1 + 1.0, t1 + 2.0).unwrap();
            let d = detection_reliability(&tr, &t).value;
            assert!(d <= prev);
            prev = d;
        }
    }
}
