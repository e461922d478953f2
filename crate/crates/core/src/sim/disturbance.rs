//! Head-vehicle schedules, measurement imperfections and actuation.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceMode {
    /// Constant cruise at `v_c`.
    Constant,
    /// Cruise at `v_c` except on one track segment, where the head follows
    /// `v_c − A sin(4π d / d_seg)`.
    SegmentSinusoid,
    /// Drive at `idle_velocity` until `segment_start`, then at `v_c`.
    IdleStart,
}

/// Position-triggered head-vehicle velocity profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSchedule {
    pub mode: DisturbanceMode,
    pub v_c: f64,
    pub amplitude: f64,
    /// Distance from the lap origin at which the segment begins, m.
    pub segment_start: f64,
    pub segment_length: f64,
    /// Track length; positions are taken modulo this.
    pub lap: f64,
    #[serde(default = "default_idle")]
    pub idle_velocity: f64,
}

fn default_idle() -> f64 {
    0.05
}

impl Default for DisturbanceSchedule {
    /// Track of four 4.375 m segments, disturbance on the second one.
    fn default() -> Self {
        Self {
            mode: DisturbanceMode::SegmentSinusoid,
            v_c: 0.3,
            amplitude: 0.13,
            segment_start: 4.375,
            segment_length: 4.375,
            lap: 17.5,
            idle_velocity: default_idle(),
        }
    }
}

impl DisturbanceSchedule {
    pub fn constant(v_c: f64) -> Self {
        Self {
            mode: DisturbanceMode::Constant,
            v_c,
            amplitude: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_c > 0.0) || !(self.amplitude >= 0.0) || !(self.amplitude < self.v_c) {
            return Err(Error::Config(alloc::format!(
                "disturbance needs 0 <= amplitude ({}) < v_c ({})",
                self.amplitude,
                self.v_c
            )));
        }
        if !(self.lap > 0.0)
            || !(self.segment_length > 0.0)
            || !(self.segment_start >= 0.0)
            || self.segment_start + self.segment_length > self.lap
        {
            return Err(Error::Config(
                "disturbance segment must lie inside the lap".into(),
            ));
        }
        if !(self.idle_velocity >= 0.0) {
            return Err(Error::Config("idle velocity must be non-negative".into()));
        }
        Ok(())
    }

    /// Velocity command for a head vehicle that has travelled `distance`.
    pub fn head_velocity(&self, distance: f64) -> f64 {
        match self.mode {
            DisturbanceMode::Constant => self.v_c,
            DisturbanceMode::IdleStart => {
                if distance < self.segment_start {
                    self.idle_velocity
                } else {
                    self.v_c
                }
            }
            DisturbanceMode::SegmentSinusoid => {
                let d = crate::linalg::wrap(distance, self.lap) - self.segment_start;
                if (0.0..self.segment_length).contains(&d) {
                    self.v_c
                        - self.amplitude
                            * libm::sin(4.0 * core::f64::consts::PI * d / self.segment_length)
                } else {
                    self.v_c
                }
            }
        }
    }
}

/// Free-function form of [`DisturbanceSchedule::head_velocity`].
pub fn head_velocity(distance: f64, sched: &DisturbanceSchedule) -> f64 {
    sched.head_velocity(distance)
}

/// Mean and standard deviation of a Gaussian quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub const fn new(mean: f64, std: f64) -> Self {
        Self { mean, std }
    }
}

/// Measurement noise, sensing and computation delays, and actuator lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImperfectionConfig {
    pub noise_enabled: bool,
    /// Additive velocity-measurement noise, m/s.
    pub velocity_noise: Gaussian,
    /// Additive position-measurement noise, m.
    pub position_noise: Gaussian,
    pub delay_enabled: bool,
    /// Age of position measurements, ms.
    pub localization_delay_ms: Gaussian,
    /// Age of velocity measurements, ms.
    pub communication_delay_ms: Gaussian,
    pub computation_delay_enabled: bool,
    /// Solver latency by number of CAVs (entry `k` for `k+1` CAVs; the last
    /// entry is reused for larger fleets), ms.
    pub computation_delay_ms: Vec<f64>,
    /// First-order actuator time constant, s. Zero tracks commands exactly.
    pub actuator_tau: f64,
}

impl Default for ImperfectionConfig {
    fn default() -> Self {
        Self {
            noise_enabled: true,
            velocity_noise: Gaussian::new(-0.0010, 0.0054),
            position_noise: Gaussian::new(0.00228, 0.00177),
            delay_enabled: true,
            localization_delay_ms: Gaussian::new(49.55, 1.39),
            communication_delay_ms: Gaussian::new(1.71, 0.66),
            computation_delay_enabled: true,
            computation_delay_ms: vec![292.80, 405.69],
            actuator_tau: 0.4,
        }
    }
}

impl ImperfectionConfig {
    /// Perfect sensing and actuation.
    pub fn ideal() -> Self {
        Self {
            noise_enabled: false,
            delay_enabled: false,
            computation_delay_enabled: false,
            actuator_tau: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let stats = [
            self.velocity_noise,
            self.position_noise,
            self.localization_delay_ms,
            self.communication_delay_ms,
        ];
        if stats
            .iter()
            .any(|g| !g.mean.is_finite() || !(g.std >= 0.0) || !g.std.is_finite())
        {
            return Err(Error::Config(
                "noise and delay statistics must be finite with std >= 0".into(),
            ));
        }
        if self.computation_delay_ms.iter().any(|&d| !(d >= 0.0)) {
            return Err(Error::Config(
                "computation delays must be non-negative".into(),
            ));
        }
        if !(self.actuator_tau >= 0.0) || !self.actuator_tau.is_finite() {
            return Err(Error::Config(
                "actuator time constant must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Whole sampling periods a new plan takes to arrive with `m` CAVs.
    pub fn computation_delay_steps(&self, m: usize, dt: f64) -> usize {
        if !self.computation_delay_enabled || m == 0 {
            return 0;
        }
        let Some(&last) = self.computation_delay_ms.last() else {
            return 0;
        };
        let ms = self
            .computation_delay_ms
            .get(m - 1)
            .copied()
            .unwrap_or(last);
        libm::ceil(ms / 1000.0 / dt - 1e-9).max(0.0) as usize
    }
}

pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn draw(rng: &mut ChaCha8Rng, g: Gaussian) -> f64 {
    if g.std == 0.0 {
        return g.mean;
    }
    Normal::new(g.mean, g.std)
        .map(|d| d.sample(rng))
        .unwrap_or(g.mean)
}

/// Seeded source of additive measurement noise, one draw per vehicle and step.
#[derive(Debug, Clone)]
pub struct MeasurementNoise {
    rng: ChaCha8Rng,
    position: Gaussian,
    velocity: Gaussian,
}

impl MeasurementNoise {
    pub fn new(imp: &ImperfectionConfig, seed: u64) -> Self {
        Self {
            rng: stream(seed, 1),
            position: imp.position_noise,
            velocity: imp.velocity_noise,
        }
    }

    /// `(position, velocity)` offsets.
    pub fn sample(&mut self) -> (f64, f64) {
        let p = draw(&mut self.rng, self.position);
        let v = draw(&mut self.rng, self.velocity);
        (p, v)
    }
}

/// Velocity command built from the measured velocity and an acceleration.
pub fn command_velocity(v_measured: f64, acceleration: f64, dt: f64) -> f64 {
    v_measured + acceleration * dt
}

/// One step of a first-order actuator tracking `v_cmd`; velocities stay
/// non-negative.
pub fn apply_actuator_lag(v: f64, v_cmd: f64, tau: f64, dt: f64) -> f64 {
    let gain = dt / (tau + dt);
    (v + gain * (v_cmd - v)).max(0.0)
}
