use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BenchError;
use crate::baselines::{IpnConfig, MapConfig, SpsaConfig, SpsaSchedule};
use crate::cma::{default_params, CmaParams};
use crate::feedback::{StateActionTable, Weights};
use crate::race::RacingConfig;
use crate::sim::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MAP")]
    Map,
    #[serde(rename = "IPN")]
    Ipn,
    #[serde(rename = "SPSA")]
    Spsa,
    #[serde(rename = "CMA-ES")]
    CmaEs,
    #[serde(rename = "RACE-CMA")]
    RaceCma,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Map, Method::Ipn, Method::Spsa, Method::CmaEs, Method::RaceCma];

    pub fn name(self) -> &'static str {
        match self {
            Method::Map => "MAP",
            Method::Ipn => "IPN",
            Method::Spsa => "SPSA",
            Method::CmaEs => "CMA-ES",
            Method::RaceCma => "RACE-CMA",
        }
    }

    /// Generation-based methods (those with a convergence trace).
    pub fn is_evolutionary(self) -> bool {
        matches!(self, Method::CmaEs | Method::RaceCma)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.trim().to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        match key.as_str() {
            "map" => Ok(Method::Map),
            "ipn" => Ok(Method::Ipn),
            "spsa" => Ok(Method::Spsa),
            "cma" | "cmaes" => Ok(Method::CmaEs),
            "race" | "racecma" => Ok(Method::RaceCma),
            _ => Err(BenchError::Config(format!("unknown method '{s}'"))),
        }
    }
}

/// Population size, initial step size, generation cap and optional
/// learning-rate overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaSettings {
    pub lambda: usize,
    pub sigma0: f64,
    pub generations: usize,
    pub c_sigma: Option<f64>,
    pub d_sigma: Option<f64>,
    pub c_c: Option<f64>,
    pub c1: Option<f64>,
    pub c_mu: Option<f64>,
}

impl Default for CmaSettings {
    fn default() -> Self {
        Self {
            lambda: 12,
            sigma0: 2.0,
            generations: 10,
            c_sigma: None,
            d_sigma: None,
            c_c: None,
            c1: None,
            c_mu: None,
        }
    }
}

impl CmaSettings {
    pub fn params(&self, n: usize) -> Result<CmaParams, BenchError> {
        let mut p = default_params(n, self.lambda)?;
        for (slot, v) in [
            (&mut p.c_sigma, self.c_sigma),
            (&mut p.d_sigma, self.d_sigma),
            (&mut p.c_c, self.c_c),
            (&mut p.c1, self.c1),
            (&mut p.c_mu, self.c_mu),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if !(p.c_sigma > 0.0 && p.c_sigma < 1.0 && p.c_c > 0.0 && p.c_c <= 1.0 && p.d_sigma > 0.0) {
            return Err(BenchError::Config("CMA path rates must lie in (0, 1) and d_sigma > 0".into()));
        }
        if !(p.c1 >= 0.0 && p.c_mu >= 0.0 && p.c1 + p.c_mu <= 1.0) {
            return Err(BenchError::Config("CMA learning rates need c1, c_mu >= 0 and c1 + c_mu <= 1".into()));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpsaSettings {
    pub a: f64,
    pub big_a: f64,
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub probe_every: usize,
}

impl Default for SpsaSettings {
    fn default() -> Self {
        let s = SpsaSchedule::default();
        Self {
            a: s.a,
            big_a: s.big_a,
            c: s.c,
            alpha: s.alpha,
            gamma: s.gamma,
            probe_every: SpsaConfig::default().probe_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IpnSettings {
    pub mu0: f64,
    pub mu_shrink: f64,
    pub fd_step: f64,
}

impl Default for IpnSettings {
    fn default() -> Self {
        let c = IpnConfig::default();
        Self {
            mu0: c.mu0,
            mu_shrink: c.mu_shrink,
            fd_step: c.fd_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSettings {
    pub episodes: usize,
}

impl Default for MapSettings {
    fn default() -> Self {
        Self {
            episodes: MapConfig::default().episodes,
        }
    }
}

/// Run protocol shared by `compare`, `sweep` and `converge`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub methods: Vec<Method>,
    pub repetitions: usize,
    /// Sweep grid (dBm).
    pub power_grid: Vec<f64>,
    /// Per-run evaluation budget (N_eq).
    pub budget: f64,
    pub master_seed: u64,
    pub output_dir: String,
    /// Held-out episodes used to score initial and final thresholds.
    pub eval_episodes: usize,
    /// RESI interval for random initial thresholds.
    pub initial_resi_range: [f64; 2],
    /// UE placement box (m).
    pub ue_x_range: [f64; 2],
    pub ue_y_range: [f64; 2],
    /// Static thresholds the sweep compares against; when unset each
    /// repetition's random initial thresholds serve as the fixed baseline.
    pub fixed_thresholds: Option<[f64; 3]>,
    /// Scalarization used when tuning in the sweep.
    pub sweep_weights: Weights,
    /// Power levels (dBm) of the convergence traces.
    pub convergence_powers: Vec<f64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            repetitions: 20,
            power_grid: vec![10.0, 15.0, 20.0, 24.7, 30.0],
            budget: 120.0,
            master_seed: 2024,
            output_dir: "results".into(),
            eval_episodes: 30,
            initial_resi_range: [2.0, 8.0],
            ue_x_range: [90.0, 150.0],
            ue_y_range: [-30.0, 0.0],
            fixed_thresholds: None,
            sweep_weights: Weights::new(1.0, 0.5, 0.0),
            convergence_powers: vec![20.0, 24.7],
        }
    }
}

/// Harness defaults differ from the library's in one place: racing uses
/// Stage-2 truncation `beta = 0.8`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub scenario: ScenarioConfig,
    pub actions: StateActionTable,
    pub weights: Weights,
    pub cma: CmaSettings,
    pub racing: RacingConfig,
    pub spsa: SpsaSettings,
    pub ipn: IpnSettings,
    pub map: MapSettings,
    pub experiment: ExperimentSpec,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            actions: StateActionTable::default(),
            weights: Weights::default(),
            cma: CmaSettings::default(),
            racing: RacingConfig::benchmark(),
            spsa: SpsaSettings::default(),
            ipn: IpnSettings::default(),
            map: MapSettings::default(),
            experiment: ExperimentSpec::default(),
        }
    }
}

impl BenchConfig {

    pub fn from_toml_str(s: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String, BenchError> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the serialized configuration.
    pub fn hash(&self) -> Result<String, BenchError> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        self.scenario.validate()?;
        self.actions.validate()?;
        self.weights.validate()?;
        self.experiment.sweep_weights.validate()?;
        let params = self.cma.params(3)?;
        self.racing.validate(params.lambda)?;
        if !(self.cma.sigma0 > 0.0 && self.cma.sigma0.is_finite()) || self.cma.generations == 0 {
            return Err(BenchError::Config("cma.sigma0 must be positive and cma.generations >= 1".into()));
        }
        self.spsa_config(0).schedule.validate()?;
        if self.spsa.probe_every == 0 {
            return Err(BenchError::Config("spsa.probe_every must be >= 1".into()));
        }
        if !(self.ipn.mu0 > 0.0 && self.ipn.mu_shrink > 1.0 && self.ipn.fd_step > 0.0) {
            return Err(BenchError::Config("ipn needs mu0, fd_step > 0 and mu_shrink > 1".into()));
        }
        if self.map.episodes == 0 {
            return Err(BenchError::Config("map.episodes must be >= 1".into()));
        }

        let e = &self.experiment;
        if e.repetitions == 0 {
            return Err(BenchError::Config("experiment.repetitions must be >= 1".into()));
        }
        if e.methods.is_empty() {
            return Err(BenchError::Config("experiment.methods is empty".into()));
        }
        if !(e.budget > 0.0 && e.budget.is_finite()) {
            return Err(BenchError::Config("experiment.budget must be positive".into()));
        }
        if e.eval_episodes == 0 {
            return Err(BenchError::Config("experiment.eval_episodes must be >= 1".into()));
        }
        let [lo, hi] = self.scenario.tx_power_range_dbm;
        for p in e.power_grid.iter().chain(&e.convergence_powers) {
            if !(lo..=hi).contains(p) {
                return Err(BenchError::Config(format!("power {p} dBm outside the scenario range [{lo}, {hi}]")));
            }
        }
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(e.initial_resi_range) || !ordered(e.ue_x_range) || !ordered(e.ue_y_range) {
            return Err(BenchError::Config("experiment ranges must be finite [low, high] pairs".into()));
        }
        if let Some([t1, t2, t3]) = e.fixed_thresholds {
            let d = self.racing.min_spacing;
            if !(t2 - t1 >= d && t3 - t2 >= d) {
                return Err(BenchError::Config(format!(
                    "fixed thresholds must be ordered with spacing >= {d}"
                )));
            }
        }
        Ok(())
    }

    pub fn spsa_config(&self, seed: u64) -> SpsaConfig {
        SpsaConfig {
            schedule: SpsaSchedule {
                a: self.spsa.a,
                big_a: self.spsa.big_a,
                c: self.spsa.c,
                alpha: self.spsa.alpha,
                gamma: self.spsa.gamma,
            },
            min_spacing: self.racing.min_spacing,
            probe_every: self.spsa.probe_every,
            max_iterations: None,
            budget: self.experiment.budget,
            seed,
        }
    }

    pub fn ipn_config(&self, seed: u64) -> IpnConfig {
        IpnConfig {
            mu0: self.ipn.mu0,
            mu_shrink: self.ipn.mu_shrink,
            fd_step: self.ipn.fd_step,
            budget: self.experiment.budget,
            seed,
            ..IpnConfig::default()
        }
    }

    pub fn map_config(&self, seed: u64) -> MapConfig {
        MapConfig {
            episodes: self.map.episodes,
            min_spacing: self.racing.min_spacing,
            seed,
        }
    }
}
