use rand::Rng;
use rand_distr::StandardNormal;

use super::{check_fidelity, ObjectiveError, StochasticObjective};
use crate::seed;

fn check_dim(expected: usize, point: &[f64]) -> Result<(), ObjectiveError> {
    if point.len() == expected {
        Ok(())
    } else {
        Err(ObjectiveError::Dimension {
            expected,
            got: point.len(),
        })
    }
}

/// `f(x) = ||x - center||^2`, deterministic.
#[derive(Debug, Clone)]
pub struct Sphere {
    pub center: Vec<f64>,
}

impl Sphere {
    pub fn new(center: Vec<f64>) -> Self {
        Self { center }
    }

    pub fn value(&self, point: &[f64]) -> f64 {
        point.iter().zip(&self.center).map(|(x, c)| (x - c).powi(2)).sum()
    }
}

impl StochasticObjective for Sphere {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn evaluate(&self, point: &[f64], _seed: u64, fidelity: f64) -> Result<f64, ObjectiveError> {
        check_fidelity(fidelity)?;
        check_dim(self.dim(), point)?;
        Ok(self.value(point))
    }
}

/// Sphere plus additive Gaussian noise that depends only on the seed, with
/// standard deviation `noise_std / sqrt(fidelity)`.
#[derive(Debug, Clone)]
pub struct NoisySphere {
    pub sphere: Sphere,
    pub noise_std: f64,
}

impl NoisySphere {
    pub fn new(center: Vec<f64>, noise_std: f64) -> Self {
        Self {
            sphere: Sphere::new(center),
            noise_std,
        }
    }

    pub fn noise(&self, seed: u64, fidelity: f64) -> f64 {
        let z: f64 = seed::rng(seed).sample(StandardNormal);
        z * self.noise_std / fidelity.sqrt()
    }
}

impl StochasticObjective for NoisySphere {
    fn dim(&self) -> usize {
        self.sphere.dim()
    }

    fn evaluate(&self, point: &[f64], seed: u64, fidelity: f64) -> Result<f64, ObjectiveError> {
        let f = self.sphere.evaluate(point, seed, fidelity)?;
        Ok(f + self.noise(seed, fidelity))
    }
}
