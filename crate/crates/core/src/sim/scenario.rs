use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::SimError;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const BOLTZMANN: f64 = 1.380_649e-23;

/// Axis-aligned rectangular sensing region in the BS plane (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Region {
    fn default() -> Self {
        Self {
            x_min: -100.0,
            x_max: 100.0,
            y_min: 100.0,
            y_max: 250.0,
        }
    }
}

impl Region {
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }
}

/// Parameters of the single effective NLoS return path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NlosConfig {
    /// Extra path length of the scattered return leg (m).
    pub excess_path_m: f64,
    /// Power of the NLoS return relative to the LoS return (dB).
    pub relative_gain_db: f64,
    /// Arrival-angle offset of the NLoS return at the UE (rad).
    pub angle_offset_rad: f64,
}

impl Default for NlosConfig {
    fn default() -> Self {
        Self {
            excess_path_m: 40.0,
            relative_gain_db: -6.0,
            angle_offset_rad: 0.3,
        }
    }
}

/// Bistatic OFDM sensing scenario. Subcarrier count, frame cadence,
/// geometry and scattering defaults are desk-scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_bs_antennas: usize,
    pub n_ue_antennas: usize,
    /// Element spacing in carrier wavelengths.
    pub antenna_spacing: f64,
    pub carrier_freq: f64,
    pub subcarrier_spacing: f64,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub symbol_duration: f64,
    pub n_beams: usize,
    /// Beam sweep interval in radians from the BS array axis.
    pub sweep_range: [f64; 2],
    /// BS power budget used for sensing (dBm).
    pub tx_power_dbm: f64,
    pub tx_power_range_dbm: [f64; 2],
    pub noise_figure_db: f64,
    /// Effective noise bandwidth per subcarrier relative to the subcarrier
    /// spacing (sub-band width over subcarrier spacing).
    pub noise_bandwidth_scale: f64,
    /// Residual clutter/interference folded into the noise (linear I/N).
    pub interference_to_noise: f64,
    pub noise_temperature_k: f64,
    pub n_targets: usize,
    pub target_speed: f64,
    /// Episode length (s).
    pub sensing_horizon: f64,
    /// Time between sensing frames (s).
    pub frame_interval: f64,
    pub n_delay_bins: usize,
    pub n_doppler_bins: usize,
    pub nlos_path_count: usize,
    pub nlos: NlosConfig,
    pub region: Region,
    pub bs_position: [f64; 2],
    pub ue_position: [f64; 2],
    /// Constant radar cross-section of the target (m^2).
    pub rcs_m2: f64,
    /// Share of delay bins, taken from the far end of the delay axis, that
    /// form the noise-only null set.
    pub null_fraction: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_bs_antennas: 32,
            n_ue_antennas: 16,
            antenna_spacing: 0.5,
            carrier_freq: 24e9,
            subcarrier_spacing: 15e3,
            n_subcarriers: 32,
            n_symbols: 100,
            symbol_duration: 100e-6,
            n_beams: 20,
            sweep_range: [PI / 4.0, 3.0 * PI / 4.0],
            tx_power_dbm: 20.0,
            tx_power_range_dbm: [10.0, 30.0],
            noise_figure_db: 6.0,
            noise_bandwidth_scale: 10.0,
            interference_to_noise: 0.0,
            noise_temperature_k: 290.0,
            n_targets: 1,
            target_speed: 3.0,
            sensing_horizon: 10.0,
            frame_interval: 0.1,
            n_delay_bins: 10,
            n_doppler_bins: 10,
            nlos_path_count: 1,
            nlos: NlosConfig::default(),
            region: Region::default(),
            bs_position: [0.0, 0.0],
            ue_position: [120.0, 0.0],
            rcs_m2: 0.5,
            null_fraction: 0.1,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let counts = [
            ("n_bs_antennas", self.n_bs_antennas),
            ("n_ue_antennas", self.n_ue_antennas),
            ("n_subcarriers", self.n_subcarriers),
            ("n_symbols", self.n_symbols),
            ("n_beams", self.n_beams),
            ("n_targets", self.n_targets),
            ("n_delay_bins", self.n_delay_bins),
            ("n_doppler_bins", self.n_doppler_bins),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(SimError::config(format!("{name} must be at least 1")));
            }
        }
        if self.n_targets != 1 {
            return Err(SimError::config("only a single target is modelled"));
        }
        if self.nlos_path_count > 1 {
            return Err(SimError::config("nlos_path_count must be 0 or 1"));
        }
        let [lo, hi] = self.sweep_range;
        if !(lo > 0.0 && hi < PI && lo < hi) {
            return Err(SimError::config("sweep_range must be an interval inside (0, pi)"));
        }
        let [p_lo, p_hi] = self.tx_power_range_dbm;
        if !(p_lo <= p_hi && self.tx_power_dbm >= p_lo && self.tx_power_dbm <= p_hi) {
            return Err(SimError::config(format!(
                "tx_power_dbm {} outside budget range [{p_lo}, {p_hi}]",
                self.tx_power_dbm
            )));
        }
        let positive = [
            ("symbol_duration", self.symbol_duration),
            ("subcarrier_spacing", self.subcarrier_spacing),
            ("carrier_freq", self.carrier_freq),
            ("antenna_spacing", self.antenna_spacing),
            ("sensing_horizon", self.sensing_horizon),
            ("frame_interval", self.frame_interval),
            ("noise_bandwidth_scale", self.noise_bandwidth_scale),
            ("noise_temperature_k", self.noise_temperature_k),
            ("rcs_m2", self.rcs_m2),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::config(format!("{name} must be positive")));
            }
        }
        if self.target_speed < 0.0 || self.interference_to_noise < 0.0 {
            return Err(SimError::config("target_speed and interference_to_noise must be >= 0"));
        }
        let r = &self.region;
        if !(r.x_min < r.x_max && r.y_min < r.y_max) {
            return Err(SimError::config("region must have positive extent"));
        }
        if !(self.null_fraction > 0.0 && self.null_fraction < 1.0) {
            return Err(SimError::config("null_fraction must lie in (0, 1)"));
        }
        if self.n_delay_bins + self.null_taps() > self.n_subcarriers {
            return Err(SimError::config(
                "search window and null set overlap on the delay axis",
            ));
        }
        if self.n_doppler_bins > self.n_symbols {
            return Err(SimError::config("more Doppler bins than OFDM symbols"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    pub fn tx_power_watts(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    /// Per-resource-element noise-plus-interference variance (W).
    pub fn noise_variance(&self) -> f64 {
        let bandwidth =
            self.n_subcarriers as f64 * self.subcarrier_spacing * self.noise_bandwidth_scale;
        BOLTZMANN
            * self.noise_temperature_k
            * db_to_linear(self.noise_figure_db)
            * bandwidth
            * (1.0 + self.interference_to_noise)
    }

    /// Full-fidelity frame count per episode.
    pub fn frames_per_episode(&self) -> usize {
        ((self.sensing_horizon / self.frame_interval).round() as usize).max(1)
    }

    /// Steering direction of sweep beam `b`, endpoints included.
    pub fn beam_direction(&self, b: usize) -> f64 {
        let [lo, hi] = self.sweep_range;
        if self.n_beams == 1 {
            return 0.5 * (lo + hi);
        }
        lo + (hi - lo) * b as f64 / (self.n_beams - 1) as f64
    }

    /// Index of the beam whose direction is closest to `angle`, or `None`
    /// when `angle` lies outside the swept sector (half a spacing of slack).
    pub fn covering_beam(&self, angle: f64) -> Option<usize> {
        let [lo, hi] = self.sweep_range;
        if self.n_beams == 1 {
            return (angle >= lo && angle <= hi).then_some(0);
        }
        let spacing = (hi - lo) / (self.n_beams - 1) as f64;
        let pos = (angle - lo) / spacing;
        if pos < -0.5 || pos > (self.n_beams - 1) as f64 + 0.5 {
            return None;
        }
        Some((pos.round().max(0.0) as usize).min(self.n_beams - 1))
    }

    pub fn null_taps(&self) -> usize {
        ((self.null_fraction * self.n_subcarriers as f64).ceil() as usize).max(1)
    }

    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.n_subcarriers as f64 * self.subcarrier_spacing)
    }

    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.n_symbols as f64 * self.symbol_duration)
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            bs: Vector2::new(self.bs_position[0], self.bs_position[1]),
            ue: Vector2::new(self.ue_position[0], self.ue_position[1]),
        }
    }
}

/// Fixed transmitter and sensing-receiver positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub bs: Vector2<f64>,
    pub ue: Vector2<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let s = ScenarioConfig::default();
        s.validate().unwrap();
        assert_eq!(s.frames_per_episode(), 100);
        assert_eq!(s.null_taps(), 4);
        assert!((s.beam_direction(0) - PI / 4.0).abs() < 1e-15);
        assert!((s.beam_direction(19) - 3.0 * PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_sweep_and_power() {
        let mut s = ScenarioConfig::default();
        s.sweep_range = [0.0, PI];
        assert!(s.validate().is_err());
        let mut s = ScenarioConfig::default();
        s.tx_power_dbm = 40.0;
        assert!(s.validate().is_err());
        let mut s = ScenarioConfig::default();
        s.nlos_path_count = 2;
        assert!(s.validate().is_err());
        let mut s = ScenarioConfig::default();
        s.symbol_duration = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn covering_beam_partitions_sector() {
        let s = ScenarioConfig::default();
        for b in 0..s.n_beams {
            assert_eq!(s.covering_beam(s.beam_direction(b)), Some(b));
        }
        assert_eq!(s.covering_beam(0.1), None);
        assert_eq!(s.covering_beam(3.0), None);
    }
}
