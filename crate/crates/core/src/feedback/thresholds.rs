use serde::{Deserialize, Serialize};

use super::FeedbackError;

/// Three strictly increasing, finite RESI decision thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct ThresholdVector {
    t1: f64,
    t2: f64,
    t3: f64,
}

impl ThresholdVector {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Result<Self, FeedbackError> {
        if !(t1.is_finite() && t2.is_finite() && t3.is_finite()) {
            return Err(FeedbackError::Infeasible(format!(
                "non-finite thresholds ({t1}, {t2}, {t3})"
            )));
        }
        if !(t1 < t2 && t2 < t3) {
            return Err(FeedbackError::Infeasible(format!(
                "thresholds ({t1}, {t2}, {t3}) are not strictly increasing"
            )));
        }
        Ok(Self { t1, t2, t3 })
    }

    /// Also enforces `t1 + delta <= t2` and `t2 + delta <= t3`.
    pub fn with_spacing(t1: f64, t2: f64, t3: f64, delta: f64) -> Result<Self, FeedbackError> {
        let t = Self::new(t1, t2, t3)?;
        if !t.satisfies_spacing(delta) {
            return Err(FeedbackError::Infeasible(format!(
                "thresholds ({t1}, {t2}, {t3}) violate minimum spacing {delta}"
            )));
        }
        Ok(t)
    }

    pub fn from_slice(v: &[f64]) -> Result<Self, FeedbackError> {
        match v {
            [a, b, c] => Self::new(*a, *b, *c),
            _ => Err(FeedbackError::Infeasible(format!(
                "expected 3 thresholds, got {}",
                v.len()
            ))),
        }
    }

    pub fn satisfies_spacing(&self, delta: f64) -> bool {
        self.t2 - self.t1 >= delta && self.t3 - self.t2 >= delta
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }
    pub fn t2(&self) -> f64 {
        self.t2
    }
    pub fn t3(&self) -> f64 {
        self.t3
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.t1, self.t2, self.t3]
    }
}

impl TryFrom<[f64; 3]> for ThresholdVector {
    type Error = FeedbackError;
    fn try_from(v: [f64; 3]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<ThresholdVector> for [f64; 3] {
    fn from(t: ThresholdVector) -> Self {
        t.as_array()
    }
}

/// Sensing state `H_0..H_3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct HypothesisState(u8);

impl HypothesisState {
    pub const LOST: Self = Self(0);
    pub const TOP: Self = Self(3);

    pub fn new(index: u8) -> Option<Self> {
        (index <= 3).then_some(Self(index))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Upper-inclusive interval lookup: `H_i` when `T_{i-1} < x <= T_i`.
pub fn classify(x: f64, t: &ThresholdVector) -> HypothesisState {
    let idx = if x <= t.t1 {
        0
    } else if x <= t.t2 {
        1
    } else if x <= t.t3 {
        2
    } else {
        3
    };
    HypothesisState(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boundary_is_upper_inclusive() {
        let t = ThresholdVector::new(3.0, 5.0, 7.0).unwrap();
        assert_eq!(classify(3.0, &t).index(), 0);
        assert_eq!(classify(5.0, &t).index(), 1);
        assert_eq!(classify(7.0, &t).index(), 2);
        assert_eq!(classify(8.0, &t).index(), 3);
        assert_eq!(classify(4.0, &t).index(), 1);
        assert_eq!(classify(-1e9, &t).index(), 0);
    }

    #[test]
    fn rejects_infeasible_vectors() {
        assert!(ThresholdVector::new(1.0, 1.0, 2.0).is_err());
        assert!(ThresholdVector::new(3.0, 2.0, 4.0).is_err());
        assert!(ThresholdVector::new(f64::NAN, 2.0, 4.0).is_err());
        assert!(ThresholdVector::with_spacing(1.0, 1.05, 2.0, 0.1).is_err());
        assert!(ThresholdVector::with_spacing(1.0, 1.1, 2.0, 0.1).is_ok());
        assert!(ThresholdVector::from_slice(&[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn classify_is_monotone(a in -50.0..50.0f64, b in -50.0..50.0f64,
                                t1 in -10.0..10.0f64, g1 in 0.01..5.0f64, g2 in 0.01..5.0f64) {
            let t = ThresholdVector::new(t1, t1 + g1, t1 + g1 + g2).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(classify(lo, &t) <= classify(hi, &t));
        }
    }
}
