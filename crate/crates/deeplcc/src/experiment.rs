//! Single experiments: data collection, one simulated run, ASVE reporting.

use deeplcc_core::controller::{Clock, InputSource};
use deeplcc_core::fleet::{RunFailure, SimulationLog, Topology};
use deeplcc_core::hankel::{check_assumption_1, PeDiagnostic, TrajectoryDataset};
use deeplcc_core::hdv::ovm_desired_velocity;
use deeplcc_core::metrics::AsveReport;
use deeplcc_core::sim::{collect_offline_data, simulate_ring, simulate_straight};

use crate::config::{Experiment, ScenarioConfig};
use crate::error::Result;

fn config_error(msg: String) -> crate::Error {
    crate::Error::Core(deeplcc_core::Error::Config(msg))
}

/// Collects the offline dataset for the scenario's fleet and checks it.
pub fn collect(cfg: &ScenarioConfig) -> Result<(TrajectoryDataset, PeDiagnostic)> {
    let data = collect_offline_data(&cfg.fleet, &cfg.ovm, &cfg.collection, &cfg.settings())?;
    let pe = check_pe(cfg, &data)?;
    Ok((data, pe))
}

/// Rejects a dataset whose dimensions or sampling period do not match.
pub fn check_compatible(cfg: &ScenarioConfig, data: &TrajectoryDataset) -> Result<()> {
    let f = cfg.fleet.formulation();
    if data.n != f.n() || data.m != f.m() {
        return Err(config_error(format!(
            "dataset has n = {}, m = {} but the fleet needs n = {}, m = {}",
            data.n,
            data.m,
            f.n(),
            f.m()
        )));
    }
    if (data.dt - cfg.dt).abs() > 1e-9 * cfg.dt {
        return Err(config_error(format!(
            "dataset sampled at dt = {} but the scenario uses {}",
            data.dt, cfg.dt
        )));
    }
    Ok(())
}

pub fn check_pe(cfg: &ScenarioConfig, data: &TrajectoryDataset) -> Result<PeDiagnostic> {
    check_compatible(cfg, data)?;
    let f = cfg.fleet.formulation();
    Ok(check_assumption_1(data, cfg.controller.dims(f.n(), f.m())))
}

/// Runs the configured experiment. Collisions end the run early and are
/// reported in `log.failure`, not as an error.
pub fn simulate(
    cfg: &ScenarioConfig,
    data: Option<&TrajectoryDataset>,
    clock: &dyn Clock,
) -> Result<SimulationLog> {
    if let Some(d) = data {
        check_compatible(cfg, d)?;
    }
    Ok(match cfg.experiment {
        Experiment::Straight(_) => simulate_straight(&cfg.straight_scenario()?, data, clock)?,
        Experiment::Ring(_) => simulate_ring(&cfg.ring_scenario()?, data, clock)?,
    })
}

/// Fraction of solves that produced no usable plan.
pub fn solver_failure_rate(log: &SimulationLog) -> f64 {
    if log.diagnostics.is_empty() {
        return 0.0;
    }
    let failed = log
        .diagnostics
        .iter()
        .filter(|d| d.source != InputSource::Optimal)
        .count();
    failed as f64 / log.diagnostics.len() as f64
}

/// Turns a finished log into an error when the run is not usable: any
/// collision, or more than half of the solves failing.
pub fn verdict(log: &SimulationLog) -> Result<()> {
    if let Some(RunFailure::Collision { vehicle, time }) = log.failure {
        return Err(deeplcc_core::Error::Collision { vehicle, time }.into());
    }
    let rate = solver_failure_rate(log);
    if rate > 0.5 {
        return Err(deeplcc_core::Error::Solver(format!(
            "{:.0}% of {} solves failed",
            rate * 100.0,
            log.diagnostics.len()
        ))
        .into());
    }
    Ok(())
}

/// Default ASVE window: the configured one, else the whole run.
pub fn asve_window(cfg: &ScenarioConfig, log: &SimulationLog) -> (f64, f64) {
    match &cfg.experiment {
        Experiment::Straight(s) => match s.asve_window {
            Some([t0, tf]) => (t0, tf.min(log.duration())),
            None => (0.0, log.duration()),
        },
        Experiment::Ring(_) => (0.0, log.duration()),
    }
}

/// ASVE over all followers (open road) or all ring vehicles.
///
/// The prescribed equilibrium is the head cruise velocity on the open road
/// and the uniform-flow velocity on the ring.
pub fn asve_report(cfg: &ScenarioConfig, log: &SimulationLog) -> Result<AsveReport> {
    let n = cfg.fleet.n;
    let window = asve_window(cfg, log);
    let t_ini = cfg.controller.t_ini;
    let report = match (&cfg.experiment, cfg.fleet.topology) {
        (Experiment::Straight(s), _) => {
            let ids: Vec<usize> = (1..=n).collect();
            AsveReport::new(log, &ids, 0, t_ini, s.schedule.v_c, window)?
        }
        (Experiment::Ring(_), Topology::Ring { circumference }) => {
            let ids: Vec<usize> = (1..=n).collect();
            let head = cfg.fleet.formulation().head;
            let gap = circumference / n as f64 - cfg.vehicle_length;
            let v_eq = ovm_desired_velocity(gap, &cfg.ovm);
            AsveReport::new(log, &ids, head, t_ini, v_eq, window)?
        }
        (Experiment::Ring(_), Topology::Open) => {
            return Err(config_error("ring experiment on an open road".into()))
        }
    };
    Ok(report)
}

/// A run together with its all-human baseline on the open road.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: SimulationLog,
    pub report: AsveReport,
    /// Same seed, no CAVs. Only for open-road scenarios with CAVs.
    pub baseline: Option<(SimulationLog, AsveReport)>,
}

/// Runs the scenario and, on the open road, the paired baseline.
pub fn run(
    cfg: &ScenarioConfig,
    data: Option<&TrajectoryDataset>,
    clock: &dyn Clock,
) -> Result<RunOutput> {
    let log = simulate(cfg, data, clock)?;
    let mut report = asve_report(cfg, &log)?;
    let mut baseline = None;
    if matches!(cfg.experiment, Experiment::Straight(_)) && !cfg.fleet.cav_set.is_empty() {
        let base_cfg = cfg.with_cav_set(vec![])?;
        let base_log = simulate(&base_cfg, None, clock)?;
        let base_report = asve_report(&base_cfg, &base_log)?;
        report = report.against(&base_report);
        baseline = Some((base_log, base_report));
    }
    Ok(RunOutput {
        log,
        report,
        baseline,
    })
}
