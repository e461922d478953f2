//! Performance metrics over simulation logs.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::SimulationLog;

/// Reference velocity used by the ASVE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EquilibriumMode {
    /// Rolling mean of the head velocity over the previous `t_ini` samples
    /// (fewer at the start of the log).
    Estimated { head: usize, t_ini: usize },
    /// A fixed, known equilibrium velocity.
    Prescribed(f64),
}

fn window_range(log: &SimulationLog, window: (f64, f64)) -> Result<core::ops::Range<usize>> {
    let r = log.step_range(window.0, window.1);
    if r.is_empty() {
        return Err(Error::Domain(alloc::format!(
            "metric window [{}, {}) holds no samples",
            window.0,
            window.1
        )));
    }
    Ok(r)
}

fn trace(log: &SimulationLog, id: usize) -> Result<Vec<f64>> {
    let v = log.velocities(id);
    if v.len() != log.records.len() {
        return Err(Error::Domain(alloc::format!(
            "vehicle {id} is not in the log"
        )));
    }
    Ok(v)
}

/// Reference velocity at each record.
pub fn reference_velocity(log: &SimulationLog, mode: EquilibriumMode) -> Result<Vec<f64>> {
    match mode {
        EquilibriumMode::Prescribed(v) => Ok(alloc::vec![v; log.records.len()]),
        EquilibriumMode::Estimated { head, t_ini } => {
            let v0 = trace(log, head)?;
            Ok((0..v0.len())
                .map(|k| {
                    let lo = k.saturating_sub(t_ini.max(1));
                    let past = if k == 0 { &v0[..1] } else { &v0[lo..k] };
                    past.iter().sum::<f64>() / past.len() as f64
                })
                .collect())
        }
    }
}

/// Average squared velocity error `Σ_i Σ_k (v_i(k) − v*(k))² · dt` over the
/// given vehicles and the records with time in `window`.
pub fn compute_asve(
    log: &SimulationLog,
    vehicles: &[usize],
    mode: EquilibriumMode,
    window: (f64, f64),
) -> Result<f64> {
    let range = window_range(log, window)?;
    let v_star = reference_velocity(log, mode)?;
    let mut total = 0.0;
    for &id in vehicles {
        let v = trace(log, id)?;
        total += range
            .clone()
            .map(|k| {
                let e = v[k] - v_star[k];
                e * e
            })
            .sum::<f64>();
    }
    Ok(total * log.dt)
}

/// ASVE under both equilibrium modes, and reductions against a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsveReport {
    pub asve_estimated: f64,
    pub asve_prescribed: f64,
    /// `1 − ASVE / ASVE_baseline`; `None` without a baseline.
    pub reduction_estimated: Option<f64>,
    pub reduction_prescribed: Option<f64>,
    /// Time window `[t0, tf)` the sums cover, s.
    pub window: (f64, f64),
}

impl AsveReport {
    pub fn new(
        log: &SimulationLog,
        vehicles: &[usize],
        head: usize,
        t_ini: usize,
        v_c: f64,
        window: (f64, f64),
    ) -> Result<Self> {
        Ok(Self {
            asve_estimated: compute_asve(
                log,
                vehicles,
                EquilibriumMode::Estimated { head, t_ini },
                window,
            )?,
            asve_prescribed: compute_asve(log, vehicles, EquilibriumMode::Prescribed(v_c), window)?,
            reduction_estimated: None,
            reduction_prescribed: None,
            window,
        })
    }

    pub fn against(mut self, baseline: &AsveReport) -> Self {
        self.reduction_estimated = Some(reduction(self.asve_estimated, baseline.asve_estimated));
        self.reduction_prescribed = Some(reduction(self.asve_prescribed, baseline.asve_prescribed));
        self
    }
}

/// Relative reduction `1 − value / baseline`.
pub fn reduction(value: f64, baseline: f64) -> f64 {
    1.0 - value / baseline
}

/// Peak-to-peak velocity of one vehicle within `window`.
pub fn wave_amplitude(log: &SimulationLog, id: usize, window: (f64, f64)) -> Result<f64> {
    let (lo, hi) = velocity_range(log, &[id], window)?;
    Ok(hi - lo)
}

/// Smallest and largest velocity of the given vehicles within `window`.
pub fn velocity_range(
    log: &SimulationLog,
    vehicles: &[usize],
    window: (f64, f64),
) -> Result<(f64, f64)> {
    let range = window_range(log, window)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &id in vehicles {
        let v = trace(log, id)?;
        for &x in &v[range.clone()] {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    Ok((lo, hi))
}
