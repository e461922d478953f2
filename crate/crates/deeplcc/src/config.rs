//! TOML scenario files.
//!
//! ```toml
//! seed = 7
//! dt = 0.05
//! vehicle_length = 0.0
//!
//! [experiment]
//! kind = "straight"
//! duration = 60.0
//! ...
//! ```
//!
//! Every section is required; `ScenarioConfig::straight` and
//! `ScenarioConfig::ring` produce complete defaults to start from.

use std::path::Path;

use serde::{Deserialize, Serialize};

use deeplcc_core::controller::DeepLccConfig;
use deeplcc_core::fleet::{FleetConfig, OvmParams, Topology};
use deeplcc_core::qp::QpSettings;
use deeplcc_core::sim::{
    CollectionConfig, DisturbanceSchedule, ImperfectionConfig, RingPhasePlan, RingScenario,
    SimSettings, StraightScenario,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Master seed. Must fit in a TOML integer (below 2^63).
    pub seed: u64,
    pub dt: f64,
    pub vehicle_length: f64,
    pub fleet: FleetConfig,
    pub ovm: OvmParams,
    pub controller: DeepLccConfig,
    #[serde(default)]
    pub qp: QpSettings,
    pub imperfections: ImperfectionConfig,
    pub collection: CollectionConfig,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Straight(StraightSetup),
    Ring(RingSetup),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StraightSetup {
    pub duration: f64,
    #[serde(default)]
    pub head_start: f64,
    pub schedule: DisturbanceSchedule,
    /// CAV placements compared by `sweep`.
    #[serde(default = "default_cav_sets")]
    pub cav_sets: Vec<Vec<usize>>,
    /// ASVE window `[t0, tf]`; the whole run when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asve_window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingSetup {
    pub initial_velocity: f64,
    pub position_jitter: f64,
    pub phases: RingPhasePlan,
}

fn default_cav_sets() -> Vec<Vec<usize>> {
    vec![vec![], vec![1], vec![2], vec![1, 3], vec![2, 4]]
}

/// Command-line adjustments applied on top of a file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub disable_noise: bool,
    /// Turns off sensing and computation delays.
    pub disable_delay: bool,
    pub tau: Option<f64>,
}

impl ScenarioConfig {
    /// Open-road experiment with five followers and the given CAVs.
    pub fn straight(cav_set: Vec<usize>) -> Result<Self> {
        let scn = StraightScenario::new(cav_set)?;
        Ok(Self {
            seed: scn.settings.seed,
            dt: scn.settings.dt,
            vehicle_length: scn.settings.vehicle_length,
            fleet: scn.fleet,
            ovm: scn.ovm,
            controller: scn.controller,
            qp: scn.qp,
            imperfections: scn.settings.imperfections,
            collection: CollectionConfig::default(),
            experiment: Experiment::Straight(StraightSetup {
                duration: scn.duration,
                head_start: scn.head_start,
                schedule: scn.schedule,
                cav_sets: default_cav_sets(),
                asve_window: None,
            }),
        })
    }

    /// Nine-vehicle ring with vehicle 5 as CAV.
    pub fn ring() -> Result<Self> {
        let scn = RingScenario::new()?;
        Ok(Self {
            seed: scn.settings.seed,
            dt: scn.settings.dt,
            vehicle_length: scn.settings.vehicle_length,
            fleet: scn.fleet,
            ovm: scn.ovm,
            controller: scn.controller,
            qp: scn.qp,
            imperfections: scn.settings.imperfections,
            collection: CollectionConfig::default(),
            experiment: Experiment::Ring(RingSetup {
                initial_velocity: scn.initial_velocity,
                position_jitter: scn.position_jitter,
                phases: scn.phases,
            }),
        })
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|source| Error::ConfigParse {
            path: origin.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_toml_string()?.as_bytes())
    }

    pub fn settings(&self) -> SimSettings {
        SimSettings {
            dt: self.dt,
            vehicle_length: self.vehicle_length,
            imperfections: self.imperfections.clone(),
            seed: self.seed,
        }
    }

    pub fn straight_scenario(&self) -> Result<StraightScenario> {
        let Experiment::Straight(s) = &self.experiment else {
            return Err(config_error("not a straight-road experiment"));
        };
        Ok(StraightScenario {
            fleet: self.fleet.clone(),
            ovm: self.ovm,
            controller: self.controller,
            qp: self.qp,
            schedule: s.schedule,
            settings: self.settings(),
            duration: s.duration,
            head_start: s.head_start,
        })
    }

    pub fn ring_scenario(&self) -> Result<RingScenario> {
        let Experiment::Ring(r) = &self.experiment else {
            return Err(config_error("not a ring experiment"));
        };
        Ok(RingScenario {
            fleet: self.fleet.clone(),
            ovm: self.ovm,
            controller: self.controller,
            qp: self.qp,
            settings: self.settings(),
            phases: r.phases,
            initial_velocity: r.initial_velocity,
            position_jitter: r.position_jitter,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.collection.validate()?;
        match &self.experiment {
            Experiment::Straight(s) => {
                self.straight_scenario()?.validate()?;
                for set in &s.cav_sets {
                    FleetConfig::open(self.fleet.n, set.clone())?;
                }
                if let Some([t0, tf]) = s.asve_window {
                    if !(0.0 <= t0 && t0 < tf && tf <= s.duration) {
                        return Err(config_error(format!(
                            "ASVE window [{t0}, {tf}] outside [0, {}]",
                            s.duration
                        )));
                    }
                }
            }
            Experiment::Ring(_) => self.ring_scenario()?.validate()?,
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if o.disable_noise {
            self.imperfections.noise_enabled = false;
        }
        if o.disable_delay {
            self.imperfections.delay_enabled = false;
            self.imperfections.computation_delay_enabled = false;
        }
        if let Some(tau) = o.tau {
            self.imperfections.actuator_tau = tau;
        }
        self.validate()
    }

    /// Same scenario with a different CAV set.
    pub fn with_cav_set(&self, cav_set: Vec<usize>) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.fleet.cav_set = cav_set;
        cfg.fleet.validate()?;
        Ok(cfg)
    }

    pub fn is_ring(&self) -> bool {
        matches!(self.fleet.topology, Topology::Ring { .. })
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Core(deeplcc_core::Error::Config(msg.into()))
}
