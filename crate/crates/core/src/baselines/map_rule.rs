use crate::feedback::{classify, EpisodeRunner, ThresholdVector};
use crate::objective::{CostKind, CostLedger};
use crate::race::EmpiricalCdf;
use crate::seed::{self, Stream};

use super::{BaselineError, BaselineOutcome, IterationRecord};

pub const MIN_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub fn fit(samples: &[f64]) -> Result<Self, BaselineError> {
        if samples.len() < 2 {
            return Err(BaselineError::Calibration("fewer than two samples".into()));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if !(var > 0.0) {
            return Err(BaselineError::Calibration("degenerate sample spread".into()));
        }
        Ok(Self { mean, std: var.sqrt() })
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        -0.5 * z * z - self.std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Per-hypothesis Gaussian densities with priors.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisDensityModel {
    pub densities: Vec<Gaussian>,
    pub priors: Vec<f64>,
}

impl HypothesisDensityModel {
    /// Fits one Gaussian per label; priors are label frequencies.
    pub fn fit(samples: &[Vec<f64>]) -> Result<Self, BaselineError> {
        if samples.len() != 4 {
            return Err(BaselineError::Calibration(format!(
                "expected samples for 4 hypotheses, got {}",
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.len() < MIN_SAMPLES {
                return Err(BaselineError::Calibration(format!(
                    "hypothesis {i} has {} samples, need {MIN_SAMPLES}",
                    s.len()
                )));
            }
        }
        let total: usize = samples.iter().map(Vec::len).sum();
        let densities = samples.iter().map(|s| Gaussian::fit(s)).collect::<Result<Vec<_>, _>>()?;
        let priors = samples.iter().map(|s| s.len() as f64 / total as f64).collect();
        Ok(Self { densities, priors })
    }

    pub fn new(densities: Vec<Gaussian>, priors: Vec<f64>) -> Result<Self, BaselineError> {
        if densities.len() != priors.len() || densities.len() < 2 {
            return Err(BaselineError::Calibration("mismatched model sizes".into()));
        }
        if densities.iter().any(|d| !(d.std > 0.0)) {
            return Err(BaselineError::Calibration("standard deviations must be positive".into()));
        }
        if priors.iter().any(|p| !(*p > 0.0)) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(BaselineError::Calibration("priors must be positive and sum to 1".into()));
        }
        Ok(Self { densities, priors })
    }

    /// `log p(x|H_i)P(H_i) - log p(x|H_{i+1})P(H_{i+1})`
    pub fn log_posterior_gap(&self, i: usize, x: f64) -> f64 {
        self.densities[i].log_pdf(x) + self.priors[i].ln()
            - self.densities[i + 1].log_pdf(x)
            - self.priors[i + 1].ln()
    }
}

/// Point where the weighted densities of `a` and `b` are equal. Closed form
/// for equal spreads; otherwise the real root nearest the midpoint of the
/// two means.
pub fn posterior_crossing(a: Gaussian, pa: f64, b: Gaussian, pb: f64) -> Result<f64, BaselineError> {
    if !(a.mean < b.mean) {
        return Err(BaselineError::Calibration(format!(
            "fitted means {} and {} are not ordered",
            a.mean, b.mean
        )));
    }
    let (va, vb) = (a.std * a.std, b.std * b.std);
    let log_ratio = (pa * b.std / (pb * a.std)).ln();
    let qa = 0.5 / vb - 0.5 / va;
    let qb = a.mean / va - b.mean / vb;
    let qc = 0.5 * b.mean * b.mean / vb - 0.5 * a.mean * a.mean / va + log_ratio;
    let mid = 0.5 * (a.mean + b.mean);

    if qa.abs() <= 1e-12 * (0.5 / va).max(0.5 / vb) {
        return Ok(-qc / qb);
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Err(BaselineError::Calibration("weighted densities never cross".into()));
    }
    let s = disc.sqrt();
    let q = -0.5 * (qb + qb.signum() * s);
    let roots = [q / qa, if q != 0.0 { qc / q } else { q / qa }];
    Ok(roots
        .into_iter()
        .min_by(|x, y| (x - mid).abs().total_cmp(&(y - mid).abs()))
        .expect("two candidate roots"))
}

/// Three posterior-equality crossings, lifted to spacing `delta` if needed.
pub fn map_thresholds(model: &HypothesisDensityModel, delta: f64) -> Result<ThresholdVector, BaselineError> {
    if model.densities.len() != 4 {
        return Err(BaselineError::Calibration("MAP placement needs four hypotheses".into()));
    }
    let mut t = [0.0; 3];
    for (i, slot) in t.iter_mut().enumerate() {
        *slot = posterior_crossing(
            model.densities[i],
            model.priors[i],
            model.densities[i + 1],
            model.priors[i + 1],
        )?;
    }
    for i in 1..3 {
        if t[i] - t[i - 1] < delta {
            t[i] = t[i - 1] + delta;
            while t[i] - t[i - 1] < delta {
                t[i] = t[i].next_up();
            }
        }
    }
    Ok(ThresholdVector::new(t[0], t[1], t[2])?)
}

/// RESI samples labelled by the state a provisional threshold vector assigns
/// them, from `episodes` full episodes.
pub fn labelled_samples(
    runner: &EpisodeRunner,
    provisional: &ThresholdVector,
    episodes: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, BaselineError> {
    let mut out = vec![Vec::new(); 4];
    for e in 0..episodes {
        let trace = runner.run(provisional, seed::child(seed, Stream::Calibration, e as u64, 1), 1.0)?;
        for (x, p) in trace.resi.iter().zip(&trace.power) {
            if *p > 0.0 {
                out[classify(*x, provisional).index()].push(*x);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    /// Full calibration episodes, each charged one N_eq.
    pub episodes: usize,
    pub min_spacing: f64,
    pub seed: u64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            episodes: 20,
            min_spacing: 0.1,
            seed: 0,
        }
    }
}

/// Runs calibration episodes at `operating`, labels the measured RESI by the
/// operating thresholds (or by sample quartiles when a state is too sparse),
/// fits the four densities and places thresholds at the posterior crossings.
/// A pair whose weighted densities do not cross keeps its provisional
/// boundary.
pub fn map_optimize(
    runner: &EpisodeRunner,
    operating: &ThresholdVector,
    cfg: &MapConfig,
) -> Result<BaselineOutcome, BaselineError> {
    if cfg.episodes == 0 {
        return Err(BaselineError::Config("MAP needs at least one calibration episode".into()));
    }
    let ledger = CostLedger::new();
    let mut pooled = Vec::new();
    for e in 0..cfg.episodes {
        let trace = runner.run(operating, seed::child(cfg.seed, Stream::Calibration, e as u64, 1), 1.0)?;
        ledger.charge(CostKind::Baseline, 1.0);
        pooled.extend(trace.resi.iter().zip(&trace.power).filter(|(_, p)| **p > 0.0).map(|(x, _)| *x));
    }

    let label = |t: &ThresholdVector| {
        let mut out = vec![Vec::new(); 4];
        for &x in &pooled {
            out[classify(x, t).index()].push(x);
        }
        out
    };
    let mut provisional = *operating;
    let mut classes = label(&provisional);
    if classes.iter().any(|c| c.len() < MIN_SAMPLES) {
        let cdf = EmpiricalCdf::new(pooled.clone())
            .map_err(|e| BaselineError::Calibration(format!("no usable RESI samples: {e}")))?;
        provisional = ThresholdVector::new(cdf.quantile(0.25), cdf.quantile(0.5), cdf.quantile(0.75))
            .map_err(|_| BaselineError::Calibration("RESI samples have no spread".into()))?;
        classes = label(&provisional);
    }
    let model = HypothesisDensityModel::fit(&classes)?;

    let p = provisional.as_array();
    let mut t = [0.0; 3];
    for i in 0..3 {
        t[i] = posterior_crossing(
            model.densities[i],
            model.priors[i],
            model.densities[i + 1],
            model.priors[i + 1],
        )
        .unwrap_or(p[i]);
    }
    for i in 1..3 {
        if t[i] - t[i - 1] < cfg.min_spacing {
            t[i] = t[i - 1] + cfg.min_spacing;
            while t[i] - t[i - 1] < cfg.min_spacing {
                t[i] = t[i].next_up();
            }
        }
    }
    let point = ThresholdVector::new(t[0], t[1], t[2])?;
    Ok(BaselineOutcome {
        best_point: point,
        best_cost: f64::NAN,
        final_point: point,
        history: vec![IterationRecord {
            iteration: 1,
            cost: f64::NAN,
            thresholds: t,
            n_eq: ledger.total(),
        }],
        ledger: ledger.snapshot(),
    })
}
