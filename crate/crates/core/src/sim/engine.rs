use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::disturbance::{
    apply_actuator_lag, command_velocity, draw, stream, Gaussian, ImperfectionConfig,
    MeasurementNoise,
};
use crate::fleet::{StepRecord, VehicleRecord, VehicleState};

const HISTORY: usize = 16;

/// What a vehicle is told to do during one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Command {
    /// Track a velocity directly (head vehicles).
    Velocity(f64),
    /// Apply an acceleration through the measured-velocity command.
    Accel(f64),
}

/// Sensed quantities of every vehicle at one step.
#[derive(Debug, Clone)]
pub(crate) struct Measurement {
    pub velocity: Vec<f64>,
    pub spacing: Vec<f64>,
}

/// Vehicles stored by slot. Open road: slot `i` is vehicle `i` (0 = head).
/// Ring: slot `k` is vehicle `k + 1`. Positions are never wrapped internally.
pub(crate) struct Engine {
    pub dt: f64,
    pub ids: Vec<usize>,
    pred: Vec<Option<usize>>,
    circumference: Option<f64>,
    length: f64,
    pub pos: Vec<f64>,
    pub vel: Vec<f64>,
    pub acc: Vec<f64>,
    history: VecDeque<(Vec<f64>, Vec<f64>)>,
    imp: ImperfectionConfig,
    noise: MeasurementNoise,
    delay_rng: ChaCha8Rng,
}

impl Engine {
    pub fn open(
        pos: Vec<f64>,
        vel: Vec<f64>,
        length: f64,
        dt: f64,
        imp: ImperfectionConfig,
        seed: u64,
    ) -> Self {
        let n = pos.len();
        let pred = (0..n).map(|i| i.checked_sub(1)).collect();
        Self::build(
            (0..n).collect(),
            pred,
            None,
            pos,
            vel,
            length,
            dt,
            imp,
            seed,
        )
    }

    pub fn ring(
        pos: Vec<f64>,
        vel: Vec<f64>,
        circumference: f64,
        length: f64,
        dt: f64,
        imp: ImperfectionConfig,
        seed: u64,
    ) -> Self {
        let n = pos.len();
        let pred = (0..n)
            .map(|k| Some(if k == 0 { n - 1 } else { k - 1 }))
            .collect();
        Self::build(
            (1..=n).collect(),
            pred,
            Some(circumference),
            pos,
            vel,
            length,
            dt,
            imp,
            seed,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        ids: Vec<usize>,
        pred: Vec<Option<usize>>,
        circumference: Option<f64>,
        pos: Vec<f64>,
        vel: Vec<f64>,
        length: f64,
        dt: f64,
        imp: ImperfectionConfig,
        seed: u64,
    ) -> Self {
        let mut history = VecDeque::with_capacity(HISTORY);
        history.push_front((pos.clone(), vel.clone()));
        Self {
            dt,
            acc: alloc::vec![0.0; ids.len()],
            ids,
            pred,
            circumference,
            length,
            pos,
            vel,
            history,
            noise: MeasurementNoise::new(&imp, seed),
            delay_rng: stream(seed, 2),
            imp,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn slot_of(&self, id: usize) -> usize {
        match self.circumference {
            Some(_) => id - 1,
            None => id,
        }
    }

    fn spacing_from(&self, pos: &[f64], k: usize) -> f64 {
        match self.pred[k] {
            None => f64::INFINITY,
            Some(j) => {
                let wrap = match self.circumference {
                    Some(c) if k == 0 => c,
                    _ => 0.0,
                };
                pos[j] + wrap - pos[k] - self.length
            }
        }
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.spacing_from(&self.pos, k))
            .collect()
    }

    fn delay_steps(&mut self, g: Gaussian) -> usize {
        if !self.imp.delay_enabled {
            return 0;
        }
        let ms = draw(&mut self.delay_rng, g).max(0.0);
        let steps = libm::round(ms / 1000.0 / self.dt) as usize;
        steps.min(self.history.len() - 1)
    }

    /// Samples noisy, delayed measurements of every vehicle.
    pub fn measure(&mut self) -> Measurement {
        let n = self.len();
        let mut pos = Vec::with_capacity(n);
        let mut velocity = Vec::with_capacity(n);
        for k in 0..n {
            let dp = self.delay_steps(self.imp.localization_delay_ms);
            let dv = self.delay_steps(self.imp.communication_delay_ms);
            let (mut p, mut v) = (self.history[dp].0[k], self.history[dv].1[k]);
            if self.imp.noise_enabled {
                let (dp, dv) = self.noise.sample();
                p += dp;
                v += dv;
            }
            pos.push(p);
            velocity.push(v);
        }
        let spacing = (0..n).map(|k| self.spacing_from(&pos, k)).collect();
        Measurement { velocity, spacing }
    }

    /// Velocity commands that `cmds` produce under measurement `meas`.
    pub fn command_velocities(&self, cmds: &[Command], meas: &Measurement) -> Vec<f64> {
        cmds.iter()
            .enumerate()
            .map(|(k, c)| match *c {
                Command::Velocity(v) => v,
                Command::Accel(a) => command_velocity(meas.velocity[k], a, self.dt),
            })
            .collect()
    }

    /// Step record of the current (pre-update) state.
    pub fn snapshot(
        &self,
        time: f64,
        cmd_vel: &[f64],
        is_cav: impl Fn(usize) -> bool,
    ) -> StepRecord {
        let spacing = self.spacings();
        let vehicles = (0..self.len())
            .map(|k| VehicleRecord {
                id: self.ids[k],
                state: VehicleState {
                    position: match self.circumference {
                        Some(c) => crate::linalg::wrap(self.pos[k], c),
                        None => self.pos[k],
                    },
                    velocity: self.vel[k],
                    acceleration: self.acc[k],
                    spacing: spacing[k],
                },
                is_cav: is_cav(self.ids[k]),
                cmd_velocity: cmd_vel[k],
            })
            .collect();
        StepRecord {
            time,
            vehicles,
            signals: None,
            input_source: None,
        }
    }

    /// Advances one sampling period. Returns the id of the first vehicle
    /// whose spacing is no longer positive.
    pub fn advance(&mut self, cmd_vel: &[f64]) -> Option<usize> {
        let tau = self.imp.actuator_tau;
        for (k, &cmd) in cmd_vel.iter().enumerate().take(self.len()) {
            let v_next = apply_actuator_lag(self.vel[k], cmd, tau, self.dt);
            self.pos[k] += self.vel[k] * self.dt;
            self.acc[k] = (v_next - self.vel[k]) / self.dt;
            self.vel[k] = v_next;
        }
        if self.history.len() == HISTORY {
            self.history.pop_back();
        }
        self.history
            .push_front((self.pos.clone(), self.vel.clone()));
        let spacing = self.spacings();
        (0..self.len())
            .find(|&k| spacing[k] <= 0.0)
            .map(|k| self.ids[k])
    }
}
