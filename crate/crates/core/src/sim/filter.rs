use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::grid::RxGrid;
use super::scenario::ScenarioConfig;
use super::SimError;

/// Delay/Doppler hypotheses the matched filter is evaluated on.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchWindow {
    pub delays: Vec<f64>,
    pub dopplers: Vec<f64>,
}

impl SearchWindow {
    /// `n_delay_bins` delays on the native resolution grid starting at zero,
    /// and `n_doppler_bins` Dopplers centred on zero.
    pub fn for_scenario(s: &ScenarioConfig) -> Self {
        let dt = s.delay_resolution();
        let dv = s.doppler_resolution();
        let half = (s.n_doppler_bins / 2) as f64;
        Self {
            delays: (0..s.n_delay_bins).map(|i| i as f64 * dt).collect(),
            dopplers: (0..s.n_doppler_bins).map(|j| (j as f64 - half) * dv).collect(),
        }
    }

    pub fn max_delay(&self) -> f64 {
        self.delays.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerMap {
    /// `(delay bin, doppler bin)`.
    pub surface: DMatrix<Complex64>,
    pub bin_delays: Vec<f64>,
    pub bin_dopplers: Vec<f64>,
}

impl DelayDopplerMap {
    /// `(delay index, doppler index, |S|)` of the largest-magnitude cell;
    /// ties resolve to the first cell in column-major order.
    pub fn peak(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for j in 0..self.surface.ncols() {
            for i in 0..self.surface.nrows() {
                let v = self.surface[(i, j)].norm();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        best
    }
}

/// Resource-element index set assumed to hold noise only: whole delay taps
/// (of the unitary delay transform) across all OFDM symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSet {
    pub delay_taps: Vec<usize>,
}

impl NullSet {
    /// The last `null_fraction` of the delay taps.
    pub fn for_scenario(s: &ScenarioConfig) -> Self {
        let n = s.null_taps();
        Self {
            delay_taps: (s.n_subcarriers - n..s.n_subcarriers).collect(),
        }
    }

    pub fn len(&self, n_symbols: usize) -> usize {
        self.delay_taps.len() * n_symbols
    }

    pub fn is_empty(&self) -> bool {
        self.delay_taps.is_empty()
    }
}

/// Peak matched-filter magnitude over the estimated filter-output noise
/// floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResiSample {
    pub value: f64,
    pub peak_delay: f64,
    pub peak_doppler: f64,
    /// Noise standard deviation at the filter output, `rms / sqrt(K M)`.
    pub noise_floor: f64,
    /// Per-resource-element noise RMS over the null set, when estimated.
    pub noise_rms: Option<f64>,
}

/// Precomputed phase tables for one grid shape and search window.
#[derive(Debug, Clone)]
pub struct MatchedFilter {
    window: SearchWindow,
    n_subcarriers: usize,
    n_symbols: usize,
    /// `[i][k] = exp(+j 2 pi k df tau_i)`
    delay_twiddles: Vec<Vec<Complex64>>,
    /// `[j][m] = exp(-j 2 pi nu_j m T)`
    doppler_twiddles: Vec<Vec<Complex64>>,
}

impl MatchedFilter {
    pub fn new(
        window: SearchWindow,
        n_subcarriers: usize,
        n_symbols: usize,
        subcarrier_spacing: f64,
        symbol_duration: f64,
    ) -> Result<Self, SimError> {
        let max_delay = 1.0 / subcarrier_spacing;
        let max_doppler = 0.5 / symbol_duration;
        if window.delays.is_empty() || window.dopplers.is_empty() {
            return Err(SimError::config("empty search window"));
        }
        if window.delays.iter().any(|&t| !(0.0..max_delay).contains(&t)) {
            return Err(SimError::config("window delay outside the unambiguous range"));
        }
        if window.dopplers.iter().any(|v| v.abs() > max_doppler) {
            return Err(SimError::config("window Doppler outside the unambiguous range"));
        }
        let delay_twiddles = window
            .delays
            .iter()
            .map(|&tau| {
                (0..n_subcarriers)
                    .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 * subcarrier_spacing * tau))
                    .collect()
            })
            .collect();
        let doppler_twiddles = window
            .dopplers
            .iter()
            .map(|&nu| {
                (0..n_symbols)
                    .map(|m| Complex64::from_polar(1.0, -2.0 * PI * nu * m as f64 * symbol_duration))
                    .collect()
            })
            .collect();
        Ok(Self {
            window,
            n_subcarriers,
            n_symbols,
            delay_twiddles,
            doppler_twiddles,
        })
    }

    pub fn for_scenario(s: &ScenarioConfig) -> Result<Self, SimError> {
        Self::new(
            SearchWindow::for_scenario(s),
            s.n_subcarriers,
            s.n_symbols,
            s.subcarrier_spacing,
            s.symbol_duration,
        )
    }

    pub fn window(&self) -> &SearchWindow {
        &self.window
    }

    /// `S(tau, nu) = g(tau, nu)^H y / (K M)` over the window, from
    /// pilot-compensated samples.
    pub fn apply_demodulated(&self, z: &[Complex64]) -> DelayDopplerMap {
        let (kc, mc) = (self.n_subcarriers, self.n_symbols);
        assert_eq!(z.len(), kc * mc, "grid shape does not match the filter");
        let norm = 1.0 / (kc * mc) as f64;
        let mut surface = DMatrix::from_element(
            self.window.delays.len(),
            self.window.dopplers.len(),
            Complex64::new(0.0, 0.0),
        );
        let mut per_symbol = vec![Complex64::new(0.0, 0.0); mc];
        for (i, dtw) in self.delay_twiddles.iter().enumerate() {
            per_symbol.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for (k, t) in dtw.iter().enumerate() {
                let row = &z[k * mc..(k + 1) * mc];
                for (acc, v) in per_symbol.iter_mut().zip(row) {
                    *acc += t * v;
                }
            }
            for (j, vtw) in self.doppler_twiddles.iter().enumerate() {
                let s: Complex64 = per_symbol.iter().zip(vtw).map(|(a, b)| a * b).sum();
                surface[(i, j)] = s * norm;
            }
        }
        DelayDopplerMap {
            surface,
            bin_delays: self.window.delays.clone(),
            bin_dopplers: self.window.dopplers.clone(),
        }
    }

    pub fn apply(&self, grid: &RxGrid) -> DelayDopplerMap {
        self.apply_demodulated(&grid.demodulated())
    }
}

pub fn matched_filter(grid: &RxGrid, window: &SearchWindow) -> Result<DelayDopplerMap, SimError> {
    let f = MatchedFilter::new(
        window.clone(),
        grid.n_subcarriers,
        grid.n_symbols,
        grid.subcarrier_spacing,
        grid.symbol_duration,
    )?;
    Ok(f.apply(grid))
}

/// Per-RE noise RMS over the null set: unitary inverse DFT along the
/// subcarrier axis, evaluated on the null delay taps of every symbol.
pub fn null_set_rms(z: &[Complex64], n_subcarriers: usize, n_symbols: usize, null: &NullSet) -> f64 {
    let kc = n_subcarriers;
    let mc = n_symbols;
    let scale = 1.0 / (kc as f64).sqrt();
    let mut energy = 0.0;
    let mut acc = vec![Complex64::new(0.0, 0.0); mc];
    for &tap in &null.delay_taps {
        acc.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for k in 0..kc {
            let t = Complex64::from_polar(1.0, 2.0 * PI * (k * tap % kc) as f64 / kc as f64);
            for (a, v) in acc.iter_mut().zip(&z[k * mc..(k + 1) * mc]) {
                *a += t * v;
            }
        }
        energy += acc.iter().map(|a| (a * scale).norm_sqr()).sum::<f64>();
    }
    (energy / (null.delay_taps.len() * mc) as f64).sqrt()
}

fn check_null_set(null: &NullSet, map: &DelayDopplerMap, grid: &RxGrid) -> Result<(), SimError> {
    if null.is_empty() {
        return Err(SimError::config("null set is empty"));
    }
    let tap_spacing = 1.0 / (grid.n_subcarriers as f64 * grid.subcarrier_spacing);
    let max_window = map.bin_delays.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for &tap in &null.delay_taps {
        if tap >= grid.n_subcarriers {
            return Err(SimError::config(format!("null tap {tap} outside the grid")));
        }
        if tap as f64 * tap_spacing <= max_window {
            return Err(SimError::config(format!(
                "null tap {tap} overlaps the search window"
            )));
        }
    }
    Ok(())
}

/// RESI with the noise floor estimated from `null`.
pub fn compute_resi(map: &DelayDopplerMap, grid: &RxGrid, null: &NullSet) -> Result<ResiSample, SimError> {
    check_null_set(null, map, grid)?;
    let rms = null_set_rms(&grid.demodulated(), grid.n_subcarriers, grid.n_symbols, null);
    resi_from_rms(map, rms, grid.n_subcarriers, grid.n_symbols)
}

pub(crate) fn resi_from_rms(
    map: &DelayDopplerMap,
    rms: f64,
    n_subcarriers: usize,
    n_symbols: usize,
) -> Result<ResiSample, SimError> {
    let floor = rms / ((n_subcarriers * n_symbols) as f64).sqrt();
    if !(floor > 0.0) {
        return Err(SimError::Numerical("noise floor estimate is zero".into()));
    }
    let mut s = resi_with_floor(map, floor);
    s.noise_rms = Some(rms);
    Ok(s)
}

/// RESI against an externally supplied filter-output noise floor.
pub fn resi_with_floor(map: &DelayDopplerMap, noise_floor: f64) -> ResiSample {
    let (i, j, peak) = map.peak();
    ResiSample {
        value: peak / noise_floor,
        peak_delay: map.bin_delays[i],
        peak_doppler: map.bin_dopplers[j],
        noise_floor,
        noise_rms: None,
    }
}
