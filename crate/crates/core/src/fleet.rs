//! Shared domain types: vehicles, fleets, equilibria, signals and logs.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::controller::{ControlDiagnostics, InputSource};
use crate::error::{check_len, Error, Result};

/// Longitudinal state of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// Distance along the track centerline, m. Wrapped to `[0, C)` on a ring.
    pub position: f64,
    /// m/s, never negative.
    pub velocity: f64,
    /// Realized acceleration over the last step, m/s².
    pub acceleration: f64,
    /// Gap to the predecessor's reference point minus one vehicle length, m.
    /// The open-road head vehicle has no predecessor and reports `f64::INFINITY`.
    pub spacing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    /// A head vehicle (index 0) leads followers `1..=n` on an unbounded road.
    Open,
    /// Vehicles `1..=n` on a closed loop; vehicle 1 follows vehicle n.
    Ring { circumference: f64 },
}

/// Contiguous window of ring vehicles incorporated into the controller.
/// `head` plays the role of vehicle 0 and `head+1..=last` the followers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlledSubset {
    pub head: usize,
    pub last: usize,
}

/// Vehicle roster of a scenario.
///
/// Indices are 1-based as in the traffic literature. On an open road the
/// controller formulation always spans the whole fleet; on a ring it spans
/// the `controlled_subset` window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    /// Open road: number of followers behind the head. Ring: number of vehicles.
    pub n: usize,
    /// CAV indices, strictly increasing, in the fleet's global numbering.
    pub cav_set: Vec<usize>,
    pub topology: Topology,
    #[serde(default)]
    pub controlled_subset: Option<ControlledSubset>,
}

/// The (n, S) pair seen by the controller, in its own local numbering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formulation {
    /// Global index of the vehicle treated as the head (vehicle 0).
    pub head: usize,
    /// Global indices of the followers, in order.
    pub followers: Vec<usize>,
    /// Local (1-based) CAV indices within `followers`.
    pub cav_local: Vec<usize>,
}

impl Formulation {
    pub fn n(&self) -> usize {
        self.followers.len()
    }

    pub fn m(&self) -> usize {
        self.cav_local.len()
    }

    pub fn output_len(&self) -> usize {
        self.n() + self.m()
    }
}

impl FleetConfig {
    pub fn open(n: usize, cav_set: Vec<usize>) -> Result<Self> {
        let fleet = Self {
            n,
            cav_set,
            topology: Topology::Open,
            controlled_subset: None,
        };
        fleet.validate()?;
        Ok(fleet)
    }

    pub fn ring(
        n: usize,
        circumference: f64,
        cav_set: Vec<usize>,
        subset: ControlledSubset,
    ) -> Result<Self> {
        let fleet = Self {
            n,
            cav_set,
            topology: Topology::Ring { circumference },
            controlled_subset: Some(subset),
        };
        fleet.validate()?;
        Ok(fleet)
    }

    pub fn m(&self) -> usize {
        self.cav_set.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("fleet needs at least one follower".into()));
        }
        if self.cav_set.len() > self.n {
            return Err(Error::Config(format!(
                "{} CAVs exceed fleet size {}",
                self.cav_set.len(),
                self.n
            )));
        }
        let mut prev = 0;
        for &i in &self.cav_set {
            if i <= prev || i > self.n {
                return Err(Error::Config(format!(
                    "CAV set {:?} must be strictly increasing within 1..={}",
                    self.cav_set, self.n
                )));
            }
            prev = i;
        }
        match self.topology {
            Topology::Open => {
                if self.controlled_subset.is_some() {
                    return Err(Error::Config(
                        "controlled subset applies to ring topologies only".into(),
                    ));
                }
            }
            Topology::Ring { circumference } => {
                if !(circumference > 0.0) {
                    return Err(Error::Config("ring circumference must be positive".into()));
                }
                let sub = self.controlled_subset.ok_or_else(|| {
                    Error::Config("ring topology requires a controlled subset with a head".into())
                })?;
                if sub.head < 1 || sub.last > self.n || sub.head >= sub.last {
                    return Err(Error::Config(format!(
                        "controlled subset {}..={} must satisfy 1 <= head < last <= {}",
                        sub.head, sub.last, self.n
                    )));
                }
                if self.cav_set.iter().any(|&i| i <= sub.head || i > sub.last) {
                    return Err(Error::Config(
                        "ring CAVs must be followers inside the controlled subset".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn is_cav(&self, i: usize) -> bool {
        self.cav_set.binary_search(&i).is_ok()
    }

    pub fn formulation(&self) -> Formulation {
        match (self.topology, self.controlled_subset) {
            (Topology::Ring { .. }, Some(sub)) => Formulation {
                head: sub.head,
                followers: (sub.head + 1..=sub.last).collect(),
                cav_local: self.cav_set.iter().map(|&i| i - sub.head).collect(),
            },
            _ => Formulation {
                head: 0,
                followers: (1..=self.n).collect(),
                cav_local: self.cav_set.clone(),
            },
        }
    }
}

/// Optimal-velocity-model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvmParams {
    pub alpha: f64,
    pub beta: f64,
    pub s_st: f64,
    pub s_go: f64,
    pub v_max: f64,
}

impl OvmParams {
    /// Platform calibration used on the open track.
    pub const STRAIGHT_ROAD: Self = Self {
        alpha: 1.2,
        beta: 1.8,
        s_st: 0.5,
        s_go: 1.1,
        v_max: 0.6,
    };

    /// Platform calibration used on the ring (doubled sensitivities).
    pub const RING_ROAD: Self = Self {
        alpha: 2.4,
        beta: 3.6,
        ..Self::STRAIGHT_ROAD
    };

    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0
            && self.beta > 0.0
            && 0.0 < self.s_st
            && self.s_st < self.s_go
            && self.v_max > 0.0
        {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid OVM parameters {self:?}")))
        }
    }
}

/// Uniform-flow operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumState {
    pub v_star: f64,
    pub s_star: f64,
}

/// Converts a raw output `[v_1..v_n, s_{i_1}..s_{i_m}]` into errors from equilibrium.
pub fn raw_to_error_output(
    y_raw: &[f64],
    eq: EquilibriumState,
    n: usize,
    m: usize,
) -> Result<Vec<f64>> {
    check_len("raw output", n + m, y_raw.len())?;
    Ok(y_raw
        .iter()
        .enumerate()
        .map(|(i, &y)| if i < n { y - eq.v_star } else { y - eq.s_star })
        .collect())
}

/// Inverse of [`raw_to_error_output`].
pub fn error_to_raw_output(
    y: &[f64],
    eq: EquilibriumState,
    n: usize,
    m: usize,
) -> Result<Vec<f64>> {
    check_len("error output", n + m, y.len())?;
    Ok(y.iter()
        .enumerate()
        .map(|(i, &e)| if i < n { e + eq.v_star } else { e + eq.s_star })
        .collect())
}

/// Controller-facing signals of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSignals {
    pub u: Vec<f64>,
    /// `v_0 - v*`.
    pub epsilon: f64,
    pub y: Vec<f64>,
    pub y_raw: Vec<f64>,
}

impl SystemSignals {
    /// Builds the signal set from raw measurements and an equilibrium.
    pub fn from_raw(
        u: Vec<f64>,
        v0: f64,
        y_raw: Vec<f64>,
        eq: EquilibriumState,
        n: usize,
    ) -> Result<Self> {
        let m = u.len();
        let y = raw_to_error_output(&y_raw, eq, n, m)?;
        Ok(Self {
            u,
            epsilon: v0 - eq.v_star,
            y,
            y_raw,
        })
    }
}

/// One vehicle's entry in a simulation record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleRecord {
    /// Global vehicle index (0 = open-road head).
    pub id: usize,
    pub state: VehicleState,
    pub is_cav: bool,
    /// Velocity command issued this step, m/s.
    pub cmd_velocity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub vehicles: Vec<VehicleRecord>,
    /// Controlled-subset signals (raw measurements, centered with the
    /// collection equilibrium) when a controller is attached.
    pub signals: Option<SystemSignals>,
    /// Origin of the CAV inputs; `None` when no controller is engaged.
    pub input_source: Option<InputSource>,
}

/// Why a run was not accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunFailure {
    Collision { vehicle: usize, time: f64 },
}

/// Uniform-grid record of a simulation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationLog {
    pub dt: f64,
    pub records: Vec<StepRecord>,
    pub diagnostics: Vec<ControlDiagnostics>,
    pub failure: Option<RunFailure>,
    /// Named time marks (phase switches, disturbance entry) in seconds.
    pub events: Vec<(alloc::string::String, f64)>,
}

impl SimulationLog {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    pub fn duration(&self) -> f64 {
        self.records.len() as f64 * self.dt
    }

    pub fn is_accepted(&self) -> bool {
        self.failure.is_none()
    }

    pub fn event(&self, name: &str) -> Option<f64> {
        self.events.iter().find(|(n, _)| n == name).map(|&(_, t)| t)
    }

    /// Velocity trace of one vehicle.
    pub fn velocities(&self, id: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.vehicles.iter().find(|v| v.id == id))
            .map(|v| v.state.velocity)
            .collect()
    }

    /// Index range `[start, end)` of records whose time lies in `[t0, tf)`.
    pub fn step_range(&self, t0: f64, tf: f64) -> core::ops::Range<usize> {
        let lo = libm::ceil(t0 / self.dt - 1e-9).max(0.0) as usize;
        let hi = (libm::ceil(tf / self.dt - 1e-9).max(0.0) as usize).min(self.records.len());
        lo.min(hi)..hi
    }
}
