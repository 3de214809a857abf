//! CMA-ES backbone: default parameters, sampling, ranked recombination and
//! the evolution-path updates of step size and covariance.

mod optimize;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::objective::ObjectiveError;
use crate::seed;

pub use optimize::{
    cma_optimize, write_history_csv, CmaOptions, CmaOutcome, GenerationRecord, IdentityMap, SearchMap,
};

const EIGEN_FLOOR: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum CmaError {
    #[error("invalid CMA-ES parameters: {0}")]
    Params(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Strategy parameters for dimension `n` and population `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaParams {
    pub n: usize,
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
}

pub fn effective_mass(w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    s * s / w.iter().map(|x| x * x).sum::<f64>()
}

pub fn default_params(n: usize, lambda: usize) -> Result<CmaParams, CmaError> {
    if n == 0 {
        return Err(CmaError::Params("dimension must be at least 1".into()));
    }
    if lambda < 2 {
        return Err(CmaError::Params(format!("population size {lambda} < 2")));
    }
    let mu = lambda / 2;
    let raw: Vec<f64> = (1..=mu)
        .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mu_eff = effective_mass(&weights);
    let nf = n as f64;

    let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let c_mu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    Ok(CmaParams {
        n,
        lambda,
        mu,
        weights,
        mu_eff,
        c_sigma,
        d_sigma,
        c_c,
        c1,
        c_mu,
        chi_n,
    })
}

/// Search distribution `N(m, sigma^2 C)` with its evolution paths.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaState {
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    generation: usize,
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    repairs: usize,
}

/// One offspring: the standard-normal draw and its search-space image.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub z: DVector<f64>,
    pub u: DVector<f64>,
}

impl CmaState {
    pub fn new(mean: Vec<f64>, sigma: f64) -> Result<Self, CmaError> {
        if mean.is_empty() {
            return Err(CmaError::Params("empty initial mean".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(CmaError::Params(format!("initial step size {sigma} must be positive")));
        }
        let n = mean.len();
        Ok(Self {
            mean: DVector::from_vec(mean),
            sigma,
            cov: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            repairs: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }
    pub fn p_sigma(&self) -> &DVector<f64> {
        &self.p_sigma
    }
    pub fn p_c(&self) -> &DVector<f64> {
        &self.p_c
    }
    pub fn generation(&self) -> usize {
        self.generation
    }
    /// Number of eigenvalue-floor repairs applied so far.
    pub fn repairs(&self) -> usize {
        self.repairs
    }

    /// Overwrites the covariance without repair. Only for negative controls.
    #[doc(hidden)]
    pub fn covariance_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.cov
    }

    /// `m + sigma * A z` with `A = B diag(sqrt(eig))`.
    pub fn transform(&self, z: &DVector<f64>) -> DVector<f64> {
        let scaled = z.component_mul(&self.scales);
        &self.mean + (&self.basis * scaled) * self.sigma
    }

    /// `C^{-1/2} v`.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        let proj = self.basis.transpose() * v;
        &self.basis * proj.component_div(&self.scales)
    }

    /// Symmetric within 1e-12 and every eigenvalue strictly positive.
    pub fn covariance_is_valid(&self) -> bool {
        let n = self.dim();
        for i in 0..n {
            for j in 0..i {
                if (self.cov[(i, j)] - self.cov[(j, i)]).abs() > 1e-12 {
                    return false;
                }
            }
        }
        if self.cov.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let eig = SymmetricEigen::new(self.cov.clone());
        eig.eigenvalues.iter().all(|&l| l > 0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.cov.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Eigendecomposition of `C`; eigenvalues below `1e-14 * max` are raised
    /// to that floor and `C` is rebuilt from the repaired spectrum.
    fn decompose(&mut self) -> Result<(), CmaError> {
        if self.cov.iter().any(|v| !v.is_finite()) {
            return Err(CmaError::Numerical("covariance has non-finite entries".into()));
        }
        let eig = SymmetricEigen::new(self.cov.clone());
        let max = eig.eigenvalues.max();
        if !(max > 0.0 && max.is_finite()) {
            return Err(CmaError::Numerical("covariance has no positive eigenvalue".into()));
        }
        let floor = EIGEN_FLOOR * max;
        let mut values = eig.eigenvalues.clone();
        let mut repaired = false;
        for v in values.iter_mut() {
            if *v < floor {
                *v = floor;
                repaired = true;
            }
        }
        if repaired {
            self.repairs += 1;
            self.cov = &eig.eigenvectors
                * DMatrix::from_diagonal(&values)
                * eig.eigenvectors.transpose();
            symmetrize(&mut self.cov);
        }
        self.basis = eig.eigenvectors;
        self.scales = values.map(f64::sqrt);
        Ok(())
    }

    /// Applies the mean, path, step-size and covariance updates from the
    /// ranked elites `x_{1:lambda} .. x_{mu:lambda}` and their weights. With
    /// `diagonal`, the rank-one and rank-mu terms keep only their diagonals.
    pub fn update(
        &self,
        params: &CmaParams,
        elites: &[DVector<f64>],
        weights: &[f64],
        diagonal: bool,
    ) -> Result<CmaState, CmaError> {
        if elites.is_empty() || elites.len() != weights.len() {
            return Err(CmaError::Params(format!(
                "{} elites for {} weights",
                elites.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CmaError::Params("weights must be positive and sum to 1".into()));
        }
        let n = self.dim();
        let mut next = self.clone();

        let mut mean = DVector::zeros(n);
        for (w, x) in weights.iter().zip(elites) {
            mean += x * *w;
        }
        let step = (&mean - &self.mean) / self.sigma;
        let mu_eff = effective_mass(weights);

        let cs = params.c_sigma;
        next.p_sigma = &self.p_sigma * (1.0 - cs) + self.whiten(&step) * (cs * (2.0 - cs) * mu_eff).sqrt();
        next.sigma = self.sigma * ((cs / params.d_sigma) * (next.p_sigma.norm() / params.chi_n - 1.0)).exp();

        let cc = params.c_c;
        next.p_c = &self.p_c * (1.0 - cc) + &step * (cc * (2.0 - cc) * mu_eff).sqrt();

        let mut rank_one = &next.p_c * next.p_c.transpose();
        let mut rank_mu = DMatrix::zeros(n, n);
        for (w, x) in weights.iter().zip(elites) {
            let y = (x - &self.mean) / self.sigma;
            rank_mu += (&y * y.transpose()) * *w;
        }
        if diagonal {
            rank_one = DMatrix::from_diagonal(&rank_one.diagonal());
            rank_mu = DMatrix::from_diagonal(&rank_mu.diagonal());
        }
        next.cov = &self.cov * (1.0 - params.c1 - params.c_mu) + rank_one * params.c1 + rank_mu * params.c_mu;
        symmetrize(&mut next.cov);

        next.mean = mean;
        next.generation += 1;
        next.decompose()?;
        if !(next.sigma > 0.0 && next.sigma.is_finite()) {
            return Err(CmaError::Numerical(format!("step size became {}", next.sigma)));
        }
        Ok(next)
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

pub(crate) fn standard_normal(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draws `lambda` offspring `u_j = m + sigma A z_j`.
pub fn sample_population(state: &CmaState, lambda: usize, seed: u64) -> Vec<Sample> {
    let mut rng = seed::rng(seed);
    (0..lambda)
        .map(|_| {
            let z = standard_normal(&mut rng, state.dim());
            let u = state.transform(&z);
            Sample { z, u }
        })
        .collect()
}

/// Indices sorted by ascending cost; ties keep index order.
pub fn rank_indices(costs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..costs.len()).collect();
    idx.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
    idx
}
