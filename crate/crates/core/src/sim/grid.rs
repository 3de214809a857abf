use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use super::channel::{inner, steering_vector, ChannelRealization};
use super::scenario::ScenarioConfig;
use super::SimError;
use crate::seed::{self, Stream};

/// Known unit-modulus QPSK pilot, row-major over `[subcarrier, symbol]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pilot {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    values: Vec<Complex64>,
}

impl Pilot {
    pub fn qpsk(n_subcarriers: usize, n_symbols: usize) -> Self {
        let values = (0..n_subcarriers)
            .flat_map(|k| {
                (0..n_symbols).map(move |m| {
                    let q = seed::child(0, Stream::Pilot, k as u64, m as u64) & 3;
                    Complex64::from_polar(1.0, FRAC_PI_4 + 0.5 * PI * q as f64)
                })
            })
            .collect();
        Self {
            n_subcarriers,
            n_symbols,
            values,
        }
    }

    pub fn for_scenario(s: &ScenarioConfig) -> Self {
        Self::qpsk(s.n_subcarriers, s.n_symbols)
    }

    #[inline]
    pub fn at(&self, k: usize, m: usize) -> Complex64 {
        self.values[k * self.n_symbols + m]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

/// Received resource grid `Y[k, m]` with its pilot and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct RxGrid {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    /// Row-major `[k * n_symbols + m]`.
    pub samples: Vec<Complex64>,
    pub pilot: Arc<Pilot>,
    pub noise_variance: f64,
    pub subcarrier_spacing: f64,
    pub symbol_duration: f64,
}

impl RxGrid {
    #[inline]
    pub fn at(&self, k: usize, m: usize) -> Complex64 {
        self.samples[k * self.n_symbols + m]
    }

    /// Same grid with the samples replaced.
    pub fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        assert_eq!(samples.len(), self.samples.len());
        Self {
            samples,
            ..self.clone()
        }
    }

    /// Pilot-compensated samples `conj(X) * Y`.
    pub fn demodulated(&self) -> Vec<Complex64> {
        self.samples
            .iter()
            .zip(self.pilot.values())
            .map(|(y, x)| x.conj() * y)
            .collect()
    }
}

/// One propagation path as a separable `coef * delay_phase[k] * doppler_phase[m]` term.
struct PathTerm {
    coef: Complex64,
    delay: f64,
    doppler: f64,
}

fn path_terms(
    scenario: &ScenarioConfig,
    channel: &ChannelRealization,
    beam_index: usize,
    power: f64,
) -> Vec<PathTerm> {
    let nb = scenario.n_bs_antennas;
    let nu = scenario.n_ue_antennas;
    let d = scenario.antenna_spacing;
    let f: Vec<Complex64> = steering_vector(nb, d, scenario.beam_direction(beam_index))
        .into_iter()
        .map(|c| c / (nb as f64).sqrt())
        .collect();
    let w: Vec<Complex64> = steering_vector(nu, d, channel.arrival_angle)
        .into_iter()
        .map(|c| c / (nu as f64).sqrt())
        .collect();
    let tx_gain = inner(&steering_vector(nb, d, channel.departure_angle), &f);
    let forward = power.sqrt() * channel.bs_gain.sqrt() * tx_gain;

    let mut terms = vec![PathTerm {
        coef: forward * channel.ue_gain.sqrt() * inner(&w, &steering_vector(nu, d, channel.arrival_angle)),
        delay: channel.total_delay(),
        doppler: channel.doppler,
    }];
    if let Some(nl) = channel.nlos {
        terms.push(PathTerm {
            coef: forward * nl.gain.sqrt() * inner(&w, &steering_vector(nu, d, nl.arrival_angle)),
            delay: channel.forward_delay + nl.delay,
            doppler: nl.doppler,
        });
    }
    terms
}

/// Noise-free echo grid (without pilot modulation); used by the synthesizer
/// and by closed-form checks.
pub fn echo_response(
    scenario: &ScenarioConfig,
    channel: &ChannelRealization,
    beam_index: usize,
    power: f64,
) -> Vec<Complex64> {
    let k_count = scenario.n_subcarriers;
    let m_count = scenario.n_symbols;
    let mut out = vec![Complex64::new(0.0, 0.0); k_count * m_count];
    for term in path_terms(scenario, channel, beam_index, power) {
        let dk: Vec<Complex64> = (0..k_count)
            .map(|k| {
                Complex64::from_polar(
                    1.0,
                    -2.0 * PI * k as f64 * scenario.subcarrier_spacing * term.delay,
                )
            })
            .collect();
        let dm: Vec<Complex64> = (0..m_count)
            .map(|m| {
                Complex64::from_polar(
                    1.0,
                    2.0 * PI * term.doppler * m as f64 * scenario.symbol_duration,
                )
            })
            .collect();
        for (k, a) in dk.iter().enumerate() {
            let row = term.coef * a;
            for (o, b) in out[k * m_count..(k + 1) * m_count].iter_mut().zip(&dm) {
                *o += row * b;
            }
        }
    }
    out
}

/// Synthesizes `Y[k,m] = sqrt(p) (w^H h_ret)(h_fwd^H f) X[k,m] + Z[k,m]` for
/// the sweep beam `beam_index` at sensing power `power` (W).
pub fn synthesize_rx_grid(
    scenario: &ScenarioConfig,
    channel: &ChannelRealization,
    beam_index: usize,
    power: f64,
    seed: u64,
) -> Result<RxGrid, SimError> {
    let pilot = Arc::new(Pilot::for_scenario(scenario));
    synthesize_with_pilot(scenario, channel, beam_index, power, seed, &pilot)
}

pub fn synthesize_with_pilot(
    scenario: &ScenarioConfig,
    channel: &ChannelRealization,
    beam_index: usize,
    power: f64,
    seed: u64,
    pilot: &Arc<Pilot>,
) -> Result<RxGrid, SimError> {
    if beam_index >= scenario.n_beams {
        return Err(SimError::Precondition(format!(
            "beam index {beam_index} out of range ({} beams)",
            scenario.n_beams
        )));
    }
    if !(power >= 0.0 && power.is_finite()) {
        return Err(SimError::Precondition(format!("sensing power must be >= 0, got {power}")));
    }
    let noise_variance = scenario.noise_variance();
    let mut samples = if power > 0.0 {
        echo_response(scenario, channel, beam_index, power)
    } else {
        vec![Complex64::new(0.0, 0.0); scenario.n_subcarriers * scenario.n_symbols]
    };
    for (y, x) in samples.iter_mut().zip(pilot.values()) {
        *y *= x;
    }
    add_noise(&mut samples, noise_variance, seed);
    Ok(RxGrid {
        n_subcarriers: scenario.n_subcarriers,
        n_symbols: scenario.n_symbols,
        samples,
        pilot: Arc::clone(pilot),
        noise_variance,
        subcarrier_spacing: scenario.subcarrier_spacing,
        symbol_duration: scenario.symbol_duration,
    })
}

/// Adds circularly-symmetric complex Gaussian noise of variance `variance`.
pub fn add_noise(samples: &mut [Complex64], variance: f64, seed: u64) {
    if variance <= 0.0 {
        return;
    }
    let scale = (0.5 * variance).sqrt();
    let mut rng = seed::rng(seed);
    for s in samples.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *s += Complex64::new(re * scale, im * scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::channel::{realize_channel, TargetState};
    use nalgebra::Vector2;

    fn setup(nlos: usize) -> (ScenarioConfig, ChannelRealization) {
        let mut sc = ScenarioConfig::default();
        sc.nlos_path_count = nlos;
        let t = TargetState::new(Vector2::new(20.0, 160.0), Vector2::new(1.0, 2.0), &sc.region);
        let ch = realize_channel(&sc, &t, &sc.geometry()).unwrap();
        (sc, ch)
    }

    #[test]
    fn zero_power_grid_is_noise_with_configured_variance() {
        let (sc, ch) = setup(1);
        let g = synthesize_rx_grid(&sc, &ch, 3, 0.0, 11).unwrap();
        let var = g.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / g.samples.len() as f64;
        assert!((var / g.noise_variance - 1.0).abs() < 0.05, "ratio {}", var / g.noise_variance);
    }

    #[test]
    fn same_seed_same_grid() {
        let (sc, ch) = setup(1);
        let a = synthesize_rx_grid(&sc, &ch, 5, 0.1, 99).unwrap();
        let b = synthesize_rx_grid(&sc, &ch, 5, 0.1, 99).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = synthesize_rx_grid(&sc, &ch, 5, 0.1, 100).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn aligned_noiseless_magnitude_matches_closed_form() {
        let (sc, mut ch) = setup(0);
        // point the sweep beam exactly at the target
        let beam = 7;
        ch.departure_angle = sc.beam_direction(beam);
        let p = 0.25;
        let echo = echo_response(&sc, &ch, beam, p);
        let expected = p.sqrt()
            * (ch.bs_gain * ch.ue_gain).sqrt()
            * ((sc.n_bs_antennas * sc.n_ue_antennas) as f64).sqrt();
        let pilot = Pilot::for_scenario(&sc);
        for k in 0..sc.n_subcarriers {
            for m in 0..sc.n_symbols {
                let y = echo[k * sc.n_symbols + m] * pilot.at(k, m);
                let ratio = y.norm() / pilot.at(k, m).norm();
                assert!((ratio / expected - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bad_beam_or_power_rejected() {
        let (sc, ch) = setup(1);
        assert!(synthesize_rx_grid(&sc, &ch, sc.n_beams, 0.1, 0).is_err());
        assert!(synthesize_rx_grid(&sc, &ch, 0, -1.0, 0).is_err());
    }
}
