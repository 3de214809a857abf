use std::f64::consts::PI;

use nalgebra::Vector2;
use num_complex::Complex64;
use rand::Rng;

use super::scenario::{db_to_linear, Geometry, Region, ScenarioConfig, SPEED_OF_LIGHT};
use super::SimError;
use crate::seed;

const MIN_SEPARATION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub position: Vector2<f64>,
    pub velocity: Vector2<f64>,
    pub inside_region: bool,
}

impl TargetState {
    pub fn new(position: Vector2<f64>, velocity: Vector2<f64>, region: &Region) -> Self {
        Self {
            position,
            velocity,
            inside_region: region.contains(&position),
        }
    }

    /// Uniform position inside `region` with a uniformly drawn heading.
    pub fn spawn(region: &Region, speed: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let x = rng.random_range(region.x_min..=region.x_max);
        let y = rng.random_range(region.y_min..=region.y_max);
        let heading = rng.random_range(0.0..2.0 * PI);
        let position = Vector2::new(x, y);
        Self::new(
            position,
            Vector2::new(speed * heading.cos(), speed * heading.sin()),
            region,
        )
    }
}

/// Straight-line motion with reflection at the region boundary. On each
/// reflection the heading is re-drawn within ±30° of the specular direction
/// (kept only if it still points inward); speed is preserved.
pub fn propagate_target(
    state: &TargetState,
    dt: f64,
    region: &Region,
    seed: u64,
) -> Result<TargetState, SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::Precondition(format!(
            "propagation step must be positive, got {dt}"
        )));
    }
    let mut pos = state.position + state.velocity * dt;
    let mut vel = state.velocity;
    let mut reflected = false;
    let (mut flip_x, mut flip_y) = (false, false);
    for _ in 0..8 {
        let mut changed = false;
        if pos.x > region.x_max {
            pos.x = 2.0 * region.x_max - pos.x;
            vel.x = -vel.x;
            flip_x = true;
            changed = true;
        } else if pos.x < region.x_min {
            pos.x = 2.0 * region.x_min - pos.x;
            vel.x = -vel.x;
            flip_x = true;
            changed = true;
        }
        if pos.y > region.y_max {
            pos.y = 2.0 * region.y_max - pos.y;
            vel.y = -vel.y;
            flip_y = true;
            changed = true;
        } else if pos.y < region.y_min {
            pos.y = 2.0 * region.y_min - pos.y;
            vel.y = -vel.y;
            flip_y = true;
            changed = true;
        }
        if !changed {
            break;
        }
        reflected = true;
    }
    pos.x = pos.x.clamp(region.x_min, region.x_max);
    pos.y = pos.y.clamp(region.y_min, region.y_max);

    if reflected {
        let mut rng = seed::rng(seed);
        let jitter: f64 = rng.random_range(-PI / 6.0..PI / 6.0);
        let (s, c) = jitter.sin_cos();
        let rotated = Vector2::new(c * vel.x - s * vel.y, s * vel.x + c * vel.y);
        // keep the redrawn heading only if it still moves away from every wall just hit
        let inward_x = !flip_x || rotated.x.signum() == vel.x.signum() || vel.x == 0.0;
        let inward_y = !flip_y || rotated.y.signum() == vel.y.signum() || vel.y == 0.0;
        if inward_x && inward_y {
            vel = rotated;
        }
    }
    Ok(TargetState::new(pos, vel, region))
}

/// Effective NLoS return component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlosComponent {
    pub delay: f64,
    pub doppler: f64,
    pub arrival_angle: f64,
    pub gain: f64,
}

/// Geometric channel parameters of one bistatic echo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    /// BS to target (s).
    pub forward_delay: f64,
    /// Target to UE (s).
    pub return_delay: f64,
    /// Bistatic Doppler of the LoS return (Hz); negative when the
    /// bistatic range grows.
    pub doppler: f64,
    pub departure_angle: f64,
    pub arrival_angle: f64,
    /// Forward-leg power gain (free-space path loss).
    pub bs_gain: f64,
    /// Return-leg power gain including the scattering cross-section.
    pub ue_gain: f64,
    pub nlos: Option<NlosComponent>,
}

impl ChannelRealization {
    pub fn total_delay(&self) -> f64 {
        self.forward_delay + self.return_delay
    }
}

pub fn realize_channel(
    scenario: &ScenarioConfig,
    target: &TargetState,
    geometry: &Geometry,
) -> Result<ChannelRealization, SimError> {
    let to_target = target.position - geometry.bs;
    let from_ue = target.position - geometry.ue;
    let r1 = to_target.norm();
    let r2 = from_ue.norm();
    if r1 < MIN_SEPARATION || r2 < MIN_SEPARATION || (geometry.bs - geometry.ue).norm() < MIN_SEPARATION
    {
        return Err(SimError::Geometry(format!(
            "BS {:?}, UE {:?} and target {:?} must be distinct",
            geometry.bs, geometry.ue, target.position
        )));
    }
    let lambda = scenario.wavelength();
    let range_rate = target.velocity.dot(&to_target) / r1 + target.velocity.dot(&from_ue) / r2;
    let doppler = -range_rate / lambda;

    let bs_gain = (lambda / (4.0 * PI * r1)).powi(2);
    let ue_gain = scenario.rcs_m2 / (4.0 * PI * r2 * r2);
    let arrival_angle = from_ue.y.atan2(from_ue.x);

    let nlos = (scenario.nlos_path_count == 1).then(|| {
        let cfg = &scenario.nlos;
        let r_nlos = r2 + cfg.excess_path_m.max(0.0);
        NlosComponent {
            delay: r_nlos / SPEED_OF_LIGHT,
            doppler,
            arrival_angle: arrival_angle + cfg.angle_offset_rad,
            gain: db_to_linear(cfg.relative_gain_db) * scenario.rcs_m2
                / (4.0 * PI * r_nlos * r_nlos),
        }
    });

    Ok(ChannelRealization {
        forward_delay: r1 / SPEED_OF_LIGHT,
        return_delay: r2 / SPEED_OF_LIGHT,
        doppler,
        departure_angle: to_target.y.atan2(to_target.x),
        arrival_angle,
        bs_gain,
        ue_gain,
        nlos,
    })
}

/// Uniform linear array response along the x axis with unit-modulus entries.
pub fn steering_vector(n: usize, spacing_wavelengths: f64, angle: f64) -> Vec<Complex64> {
    let phase = 2.0 * PI * spacing_wavelengths * angle.cos();
    (0..n)
        .map(|i| Complex64::from_polar(1.0, phase * i as f64))
        .collect()
}

/// `a^H b`
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
