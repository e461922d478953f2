//! Longitudinal mixed-traffic simulator.
//!
//! Vehicles advance by forward Euler with sampling period `dt`. Human-driven
//! vehicles apply the OVM to measured signals; CAVs apply controller inputs
//! through the measured-velocity command `v_cmd = v_meas + a·dt`. Every
//! command passes a first-order actuator before reaching the vehicle.

mod disturbance;
mod engine;

pub use disturbance::{
    apply_actuator_lag, command_velocity, head_velocity, DisturbanceMode, DisturbanceSchedule,
    Gaussian, ImperfectionConfig, MeasurementNoise,
};

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::controller::{Clock, DeepLccConfig, DeepLccController, InputSource};
use crate::error::{Error, Result};
use crate::fleet::{
    EquilibriumState, FleetConfig, Formulation, OvmParams, RunFailure, SimulationLog,
    SystemSignals, Topology,
};
use crate::hankel::{check_assumption_1, partition, TrajectoryDataset};
use crate::hdv::{equilibrium_spacing_inverse, ovm_acceleration, ovm_desired_velocity};
use crate::qp::QpSettings;
use disturbance::stream;
use engine::{Command, Engine, Measurement};

/// Offline excitation experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionConfig {
    /// Recorded samples `T`.
    pub samples: usize,
    /// Half-width of the uniform head-velocity perturbation (open road).
    pub delta_eps: f64,
    /// Half-width of the uniform CAV-input perturbation.
    pub delta_u: f64,
    /// Ring head-vehicle velocity feedback gain.
    pub k_r: f64,
    /// Ring head-vehicle reference velocity.
    pub v_r: f64,
    /// Open-road head cruise velocity.
    pub v_c: f64,
    /// Unrecorded settling time before sampling starts, s.
    pub warmup: f64,
}

impl Default for CollectionConfig {
    fn default() -> Self {
        Self {
            samples: 1500,
            delta_eps: 0.05,
            delta_u: 0.2,
            k_r: 8.0,
            v_r: 0.25,
            v_c: 0.3,
            warmup: 10.0,
        }
    }
}

impl CollectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0
            || !(self.delta_eps >= 0.0)
            || !(self.delta_u >= 0.0)
            || !(self.warmup >= 0.0)
        {
            return Err(Error::Config(
                "collection needs T > 0 and non-negative amplitudes".into(),
            ));
        }
        if !(self.v_c > 0.0) || !(self.v_r > 0.0) || !(self.k_r >= 0.0) {
            return Err(Error::Config(
                "collection velocities must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Equilibrium the data are centered on.
    pub fn equilibrium(&self, topology: Topology, p: &OvmParams) -> Result<EquilibriumState> {
        let v_star = match topology {
            Topology::Open => self.v_c,
            Topology::Ring { .. } => self.v_r,
        };
        Ok(EquilibriumState {
            v_star,
            s_star: equilibrium_spacing_inverse(v_star, p)?,
        })
    }
}

/// Geometry and timing shared by all experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub dt: f64,
    /// Vehicle length subtracted from center distances, m.
    pub vehicle_length: f64,
    pub imperfections: ImperfectionConfig,
    pub seed: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: 0.05,
            vehicle_length: 0.0,
            imperfections: ImperfectionConfig::default(),
            seed: 0,
        }
    }
}

impl SimSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.vehicle_length >= 0.0) {
            return Err(Error::Config(
                "dt must be positive and vehicle length non-negative".into(),
            ));
        }
        self.imperfections.validate()
    }
}

fn steps(duration: f64, dt: f64) -> usize {
    libm::round(duration / dt) as usize
}

fn ovm_slot(eng: &Engine, meas: &Measurement, k: usize, p: &OvmParams) -> f64 {
    let pred = match eng.ids[k] {
        id if k == 0 && id == 1 => eng.len() - 1,
        _ => k - 1,
    };
    ovm_acceleration(meas.spacing[k], meas.velocity[k], meas.velocity[pred], p)
}

/// Slots of the formulation's head, followers and CAVs.
struct Slots {
    head: usize,
    followers: Vec<usize>,
    cavs: Vec<usize>,
}

impl Slots {
    fn new(eng: &Engine, f: &Formulation) -> Self {
        let followers: Vec<usize> = f.followers.iter().map(|&id| eng.slot_of(id)).collect();
        Self {
            head: eng.slot_of(f.head),
            cavs: f.cav_local.iter().map(|&i| followers[i - 1]).collect(),
            followers,
        }
    }

    fn signals(&self, meas: &Measurement) -> (f64, Vec<f64>) {
        let mut y: Vec<f64> = self.followers.iter().map(|&k| meas.velocity[k]).collect();
        y.extend(self.cavs.iter().map(|&k| meas.spacing[k]));
        (meas.velocity[self.head], y)
    }
}

#[derive(Debug, Clone)]
enum Planned {
    Fixed(Vec<f64>, InputSource),
    Ovm,
}

/// Runs the controller inside the simulation loop: computation delay,
/// plan queue and past-data recording.
struct CavDriver {
    controller: DeepLccController,
    slots: Slots,
    queue: VecDeque<Planned>,
    /// Last input that came from a plan; `None` after OVM driving.
    last_planned: Option<Vec<f64>>,
    delay_steps: usize,
    collection_eq: EquilibriumState,
}

impl CavDriver {
    #[allow(clippy::too_many_arguments)]
    fn new(
        eng: &Engine,
        fleet: &FleetConfig,
        dataset: &TrajectoryDataset,
        cfg: DeepLccConfig,
        ovm: OvmParams,
        qp: QpSettings,
        delay_steps: usize,
    ) -> Result<Self> {
        let f = fleet.formulation();
        let dims = cfg.dims(f.n(), f.m());
        if dataset.n != dims.n || dataset.m != dims.m {
            return Err(Error::Config(format!(
                "dataset has n = {}, m = {} but the fleet needs n = {}, m = {}",
                dataset.n, dataset.m, dims.n, dims.m
            )));
        }
        let pe = check_assumption_1(dataset, dims);
        if !pe.satisfied {
            return Err(Error::NotPersistentlyExciting {
                rank: pe.rank,
                required: pe.required_rank,
            });
        }
        let blocks = partition(dataset, dataset.equilibrium, dims)?;
        let controller = DeepLccController::new(blocks, cfg, ovm, f.cav_local.clone(), qp)?;
        Ok(Self {
            controller,
            slots: Slots::new(eng, &f),
            queue: VecDeque::new(),
            last_planned: None,
            delay_steps,
            collection_eq: dataset.equilibrium,
        })
    }

    #[allow(clippy::too_many_arguments)]
    /// CAV inputs for this step and where they came from (`None` while the
    /// controller is off); records the sample into the past buffer.
    fn inputs(
        &mut self,
        eng: &Engine,
        meas: &Measurement,
        ovm: &OvmParams,
        active: bool,
        time: f64,
        clock: &dyn Clock,
        log: &mut SimulationLog,
    ) -> Result<(Vec<f64>, SystemSignals, Option<InputSource>)> {
        let ovm_u: Vec<f64> = self
            .slots
            .cavs
            .iter()
            .map(|&k| ovm_slot(eng, meas, k, ovm))
            .collect();
        let (v0, y_raw) = self.slots.signals(meas);
        let (u, source) = if active && self.controller.buffer().is_warm() {
            if self.queue.is_empty() {
                let outcome = self.controller.control_step(time, clock)?;
                let hold = match &self.last_planned {
                    Some(u) => Planned::Fixed(u.clone(), InputSource::HeldPlan),
                    None => Planned::Ovm,
                };
                for _ in 0..self.delay_steps {
                    self.queue.push_back(hold.clone());
                }
                let fallback = outcome.source == InputSource::OvmFallback;
                for col in outcome.inputs.column_iter() {
                    self.queue.push_back(if fallback {
                        Planned::Ovm
                    } else {
                        Planned::Fixed(col.iter().copied().collect(), outcome.source)
                    });
                }
                log.diagnostics.push(outcome.diagnostics);
            }
            match self.queue.pop_front() {
                Some(Planned::Fixed(u, src)) => {
                    self.last_planned = Some(u.clone());
                    (u, Some(src))
                }
                _ => {
                    self.last_planned = None;
                    (ovm_u, Some(InputSource::OvmFallback))
                }
            }
        } else {
            if !self.queue.is_empty() {
                self.queue.clear();
                self.controller.reset_plan();
            }
            self.last_planned = None;
            (ovm_u, None)
        };
        self.controller.record(&u, v0, &y_raw)?;
        let n = self.slots.followers.len();
        let signals = SystemSignals::from_raw(u.clone(), v0, y_raw, self.collection_eq, n)?;
        Ok((u, signals, source))
    }
}

/// Open-road experiment with a scheduled head vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct StraightScenario {
    pub fleet: FleetConfig,
    pub ovm: OvmParams,
    pub controller: DeepLccConfig,
    pub qp: QpSettings,
    pub schedule: DisturbanceSchedule,
    pub settings: SimSettings,
    pub duration: f64,
    /// Head-vehicle distance along the lap at `t = 0`.
    pub head_start: f64,
}

impl StraightScenario {
    /// Five followers, straight-road OVM gains, disturbance on segment B→C.
    pub fn new(cav_set: Vec<usize>) -> Result<Self> {
        Ok(Self {
            fleet: FleetConfig::open(5, cav_set)?,
            ovm: OvmParams::STRAIGHT_ROAD,
            controller: DeepLccConfig::default(),
            qp: QpSettings::default(),
            schedule: DisturbanceSchedule::default(),
            settings: SimSettings::default(),
            duration: 60.0,
            head_start: 0.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.fleet.validate()?;
        if self.fleet.topology != Topology::Open {
            return Err(Error::Config(
                "straight scenario needs an open topology".into(),
            ));
        }
        self.ovm.validate()?;
        self.controller.validate()?;
        self.schedule.validate()?;
        self.settings.validate()?;
        if !(self.duration > 0.0) {
            return Err(Error::Config("duration must be positive".into()));
        }
        Ok(())
    }

    /// Equilibrium of the undisturbed platoon.
    pub fn cruise_equilibrium(&self) -> Result<EquilibriumState> {
        let v = self.schedule.v_c;
        Ok(EquilibriumState {
            v_star: v,
            s_star: equilibrium_spacing_inverse(v.min(self.ovm.v_max), &self.ovm)?,
        })
    }
}

fn open_engine(
    fleet: &FleetConfig,
    eq: EquilibriumState,
    head_start: f64,
    s: &SimSettings,
    seed_stream: u64,
) -> Engine {
    let n = fleet.n;
    let gap = eq.s_star + s.vehicle_length;
    let pos = (0..=n).map(|i| head_start - i as f64 * gap).collect();
    Engine::open(
        pos,
        vec![eq.v_star; n + 1],
        s.vehicle_length,
        s.dt,
        s.imperfections.clone(),
        s.seed ^ seed_stream,
    )
}

fn collision(log: &mut SimulationLog, vehicle: usize, time: f64) {
    log.failure = Some(RunFailure::Collision { vehicle, time });
}

/// Runs an open-road experiment. A dataset is required when the fleet has CAVs.
pub fn simulate_straight(
    scn: &StraightScenario,
    dataset: Option<&TrajectoryDataset>,
    clock: &dyn Clock,
) -> Result<SimulationLog> {
    scn.validate()?;
    let s = &scn.settings;
    let eq = scn.cruise_equilibrium()?;
    let mut eng = open_engine(&scn.fleet, eq, scn.head_start, s, 0);
    let mut driver = match (scn.fleet.m(), dataset) {
        (0, _) => None,
        (_, None) => {
            return Err(Error::Config(
                "CAV fleet needs a pre-collected dataset".into(),
            ))
        }
        (m, Some(d)) => Some(CavDriver::new(
            &eng,
            &scn.fleet,
            d,
            scn.controller,
            scn.ovm,
            scn.qp,
            s.imperfections.computation_delay_steps(m, s.dt),
        )?),
    };

    let mut log = SimulationLog::new(s.dt);
    let seg = (
        scn.schedule.segment_start,
        scn.schedule.segment_start + scn.schedule.segment_length,
    );
    let mut in_segment = false;
    for k in 0..steps(scn.duration, s.dt) {
        let t = k as f64 * s.dt;
        let head_d = eng.pos[0];
        let inside = scn.schedule.mode == DisturbanceMode::SegmentSinusoid
            && (seg.0..seg.1).contains(&crate::linalg::wrap(head_d, scn.schedule.lap));
        if inside != in_segment {
            log.events.push((
                if inside {
                    "disturbance_start"
                } else {
                    "disturbance_end"
                }
                .to_string(),
                t,
            ));
            in_segment = inside;
        }

        let meas = eng.measure();
        let mut cmds: Vec<Command> = (0..eng.len())
            .map(|k| match k {
                0 => Command::Velocity(scn.schedule.head_velocity(head_d)),
                _ => Command::Accel(ovm_slot(&eng, &meas, k, &scn.ovm)),
            })
            .collect();
        let mut signals = None;
        let mut source = None;
        if let Some(d) = driver.as_mut() {
            let (u, sig, src) = d.inputs(&eng, &meas, &scn.ovm, true, t, clock, &mut log)?;
            for (j, &slot) in d.slots.cavs.iter().enumerate() {
                cmds[slot] = Command::Accel(u[j]);
            }
            signals = Some(sig);
            source = src;
        }
        let cmd_vel = eng.command_velocities(&cmds, &meas);
        let mut rec = eng.snapshot(t, &cmd_vel, |id| scn.fleet.is_cav(id));
        rec.signals = signals;
        rec.input_source = source;
        log.records.push(rec);
        if let Some(id) = eng.advance(&cmd_vel) {
            collision(&mut log, id, t + s.dt);
            break;
        }
    }
    Ok(log)
}

/// Switching times of a ring experiment, s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingPhasePlan {
    /// HDVs start driving; before this every vehicle creeps at the idle velocity.
    pub t1: f64,
    /// Controller switched on.
    pub t2: f64,
    /// Controller switched off; the CAV reverts to OVM.
    pub t3: f64,
    pub t_end: f64,
}

impl Default for RingPhasePlan {
    fn default() -> Self {
        Self {
            t1: 0.0,
            t2: 68.85,
            t3: 139.05,
            t_end: 200.0,
        }
    }
}

impl RingPhasePlan {
    pub fn validate(&self) -> Result<()> {
        let ordered =
            0.0 <= self.t1 && self.t1 < self.t2 && self.t2 < self.t3 && self.t3 < self.t_end;
        if !ordered {
            return Err(Error::Config(format!(
                "ring phases need 0 <= t1 < t2 < t3 < t_end, got {} {} {} {}",
                self.t1, self.t2, self.t3, self.t_end
            )));
        }
        Ok(())
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.t2 && t < self.t3
    }
}

/// Closed-loop experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RingScenario {
    pub fleet: FleetConfig,
    pub ovm: OvmParams,
    pub controller: DeepLccConfig,
    pub qp: QpSettings,
    pub settings: SimSettings,
    pub phases: RingPhasePlan,
    pub initial_velocity: f64,
    /// Standard deviation of the initial position perturbation, m.
    pub position_jitter: f64,
}

impl RingScenario {
    /// Nine vehicles on a 6.77 m loop; vehicles 3..=7 form the controlled
    /// subset with vehicle 5 as CAV.
    pub fn new() -> Result<Self> {
        use crate::fleet::ControlledSubset;
        Ok(Self {
            fleet: FleetConfig::ring(9, 6.77, vec![5], ControlledSubset { head: 3, last: 7 })?,
            ovm: OvmParams::RING_ROAD,
            controller: DeepLccConfig::default(),
            qp: QpSettings::default(),
            settings: SimSettings::default(),
            phases: RingPhasePlan::default(),
            initial_velocity: 0.05,
            position_jitter: 0.02,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.fleet.validate()?;
        if !matches!(self.fleet.topology, Topology::Ring { .. }) {
            return Err(Error::Config("ring scenario needs a ring topology".into()));
        }
        self.ovm.validate()?;
        self.controller.validate()?;
        self.settings.validate()?;
        self.phases.validate()?;
        if !(self.initial_velocity >= 0.0) || !(self.position_jitter >= 0.0) {
            return Err(Error::Config(
                "initial velocity and jitter must be non-negative".into(),
            ));
        }
        let gap = self.circumference() / self.fleet.n as f64 - self.settings.vehicle_length;
        if !(gap > 0.0) {
            return Err(Error::Config("vehicles do not fit on the ring".into()));
        }
        Ok(())
    }

    pub fn circumference(&self) -> f64 {
        match self.fleet.topology {
            Topology::Ring { circumference } => circumference,
            Topology::Open => f64::NAN,
        }
    }
}

fn ring_engine(
    fleet: &FleetConfig,
    c: f64,
    v0: f64,
    jitter: f64,
    s: &SimSettings,
    seed_stream: u64,
) -> Engine {
    let n = fleet.n;
    let d = c / n as f64;
    let mut rng = stream(s.seed ^ seed_stream, 3);
    let normal = Normal::new(0.0, jitter.max(0.0)).ok();
    let pos = (0..n)
        .map(|k| {
            let e = match (&normal, jitter > 0.0) {
                (Some(nd), true) => nd.sample(&mut rng),
                _ => 0.0,
            };
            (n - 1 - k) as f64 * d + e
        })
        .collect();
    Engine::ring(
        pos,
        vec![v0; n],
        c,
        s.vehicle_length,
        s.dt,
        s.imperfections.clone(),
        s.seed ^ seed_stream,
    )
}

/// Runs a ring experiment; the controller is only active inside the phase plan window.
pub fn simulate_ring(
    scn: &RingScenario,
    dataset: Option<&TrajectoryDataset>,
    clock: &dyn Clock,
) -> Result<SimulationLog> {
    scn.validate()?;
    let s = &scn.settings;
    let mut eng = ring_engine(
        &scn.fleet,
        scn.circumference(),
        scn.initial_velocity,
        scn.position_jitter,
        s,
        0,
    );
    let mut driver = match (scn.fleet.m(), dataset) {
        (0, _) => None,
        (_, None) => {
            return Err(Error::Config(
                "CAV fleet needs a pre-collected dataset".into(),
            ))
        }
        (m, Some(d)) => Some(CavDriver::new(
            &eng,
            &scn.fleet,
            d,
            scn.controller,
            scn.ovm,
            scn.qp,
            s.imperfections.computation_delay_steps(m, s.dt),
        )?),
    };

    let mut log = SimulationLog::new(s.dt);
    for (name, t) in [
        ("hdv_start", scn.phases.t1),
        ("control_on", scn.phases.t2),
        ("control_off", scn.phases.t3),
    ] {
        log.events.push((name.to_string(), t));
    }
    for k in 0..steps(scn.phases.t_end, s.dt) {
        let t = k as f64 * s.dt;
        let meas = eng.measure();
        let mut cmds: Vec<Command> = (0..eng.len())
            .map(|k| {
                if t < scn.phases.t1 {
                    Command::Velocity(scn.initial_velocity)
                } else {
                    Command::Accel(ovm_slot(&eng, &meas, k, &scn.ovm))
                }
            })
            .collect();
        let mut signals = None;
        let mut source = None;
        if let Some(d) = driver.as_mut() {
            let active = scn.phases.is_active(t);
            let (u, sig, src) = d.inputs(&eng, &meas, &scn.ovm, active, t, clock, &mut log)?;
            for (j, &slot) in d.slots.cavs.iter().enumerate() {
                cmds[slot] = Command::Accel(u[j]);
            }
            signals = Some(sig);
            source = src;
        }
        let cmd_vel = eng.command_velocities(&cmds, &meas);
        let mut rec = eng.snapshot(t, &cmd_vel, |id| scn.fleet.is_cav(id));
        rec.signals = signals;
        rec.input_source = source;
        log.records.push(rec);
        if let Some(id) = eng.advance(&cmd_vel) {
            collision(&mut log, id, t + s.dt);
            break;
        }
    }
    Ok(log)
}

/// Excites the fleet and records `(u, ε, y)` for the behavior representation.
///
/// Open road: the head cruises at `v_c` plus uniform noise and CAVs add
/// uniform noise to their OVM input. Ring: the subset head tracks `v_r` with
/// gain `k_r` on top of its OVM input, plus uniform noise; CAVs as above.
pub fn collect_offline_data(
    fleet: &FleetConfig,
    ovm: &OvmParams,
    cfg: &CollectionConfig,
    settings: &SimSettings,
) -> Result<TrajectoryDataset> {
    fleet.validate()?;
    ovm.validate()?;
    cfg.validate()?;
    settings.validate()?;
    if fleet.m() == 0 {
        return Err(Error::Config(
            "data collection needs at least one CAV".into(),
        ));
    }
    let eq = cfg.equilibrium(fleet.topology, ovm)?;
    let dt = settings.dt;
    const COLLECT: u64 = 0x636f_6c6c;
    let mut eng = match fleet.topology {
        Topology::Open => open_engine(fleet, eq, 0.0, settings, COLLECT),
        Topology::Ring { circumference } => {
            let gap = circumference / fleet.n as f64 - settings.vehicle_length;
            let v0 = ovm_desired_velocity(gap, ovm);
            ring_engine(fleet, circumference, v0, 0.0, settings, COLLECT)
        }
    };
    let f = fleet.formulation();
    let slots = Slots::new(&eng, &f);
    let mut rng = stream(settings.seed ^ COLLECT, 4);
    let ring = matches!(fleet.topology, Topology::Ring { .. });

    let warm = steps(cfg.warmup, dt);
    let total = warm + cfg.samples;
    let (n, m) = (f.n(), f.m());
    let mut u = DMatrix::zeros(m, cfg.samples);
    let mut eps = DVector::zeros(cfg.samples);
    let mut y = DMatrix::zeros(n + m, cfg.samples);
    let mut uniform = |half: f64| {
        if half > 0.0 {
            rng.random_range(-half..=half)
        } else {
            0.0
        }
    };
    for k in 0..total {
        let meas = eng.measure();
        let mut cmds: Vec<Command> = (0..eng.len())
            .map(|k| match (ring, k) {
                (false, 0) => Command::Velocity(0.0),
                _ => Command::Accel(ovm_slot(&eng, &meas, k, ovm)),
            })
            .collect();
        if ring {
            let h = slots.head;
            let a = ovm_slot(&eng, &meas, h, ovm) - cfg.k_r * (meas.velocity[h] - cfg.v_r)
                + uniform(cfg.delta_u);
            cmds[h] = Command::Accel(a);
        } else {
            cmds[0] = Command::Velocity((cfg.v_c + uniform(cfg.delta_eps)).max(0.0));
        }
        let mut inputs = Vec::with_capacity(m);
        for &slot in &slots.cavs {
            let a = ovm_slot(&eng, &meas, slot, ovm) + uniform(cfg.delta_u);
            cmds[slot] = Command::Accel(a);
            inputs.push(a);
        }
        if k >= warm {
            let j = k - warm;
            let (v0, y_raw) = slots.signals(&meas);
            u.column_mut(j).copy_from_slice(&inputs);
            eps[j] = v0 - eq.v_star;
            y.column_mut(j).copy_from_slice(&y_raw);
        }
        let cmd_vel = eng.command_velocities(&cmds, &meas);
        if let Some(id) = eng.advance(&cmd_vel) {
            return Err(Error::Collision {
                vehicle: id,
                time: (k + 1) as f64 * dt,
            });
        }
    }
    TrajectoryDataset::new(dt, n, m, u, eps, y, eq)
}
