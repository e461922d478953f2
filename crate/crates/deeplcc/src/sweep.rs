//! CAV-placement sweeps on the open road.
//!
//! Every CAV set gets its own dataset, collected with a seed derived from the
//! master seed and the set; all runs share the master seed so they see the
//! same noise and delays. Cases run in parallel and the table keeps the input
//! order.

use std::path::Path;

use rayon::prelude::*;

use deeplcc_core::fleet::SimulationLog;
use deeplcc_core::hankel::TrajectoryDataset;
use deeplcc_core::metrics::AsveReport;

use crate::clock::WallClock;
use crate::config::{Experiment, ScenarioConfig};
use crate::error::{Error, Result};
use crate::experiment;
use crate::io::{self, ReportRow};

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<ReportRow>,
    /// Logs of the rows' runs, `None` where a case failed before finishing.
    pub logs: Vec<Option<SimulationLog>>,
    pub warnings: Vec<String>,
    /// Exit status of the first failed case, 0 when every case succeeded.
    pub exit_code: i32,
}

/// Drops repeated sets, keeping the first occurrence.
pub fn dedup_cav_sets(sets: &[Vec<usize>]) -> (Vec<Vec<usize>>, Vec<String>) {
    let mut kept: Vec<Vec<usize>> = Vec::new();
    let mut warnings = Vec::new();
    for s in sets {
        if kept.contains(s) {
            warnings.push(format!(
                "duplicate CAV set {} ignored",
                io::format_cav_set(s)
            ));
        } else {
            kept.push(s.clone());
        }
    }
    (kept, warnings)
}

/// Collection seed for one CAV set (splitmix64 over the set's members).
pub fn collection_seed(master: u64, cav_set: &[usize]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    let mut h = mix(master);
    for &i in cav_set {
        h = mix(h ^ i as u64);
    }
    mix(h ^ cav_set.len() as u64) >> 1
}

/// Directory-safe name of a CAV set: `none`, `2`, `1-3`.
pub fn case_label(cav_set: &[usize]) -> String {
    if cav_set.is_empty() {
        return "none".into();
    }
    let parts: Vec<String> = cav_set.iter().map(|i| i.to_string()).collect();
    parts.join("-")
}

fn dataset_for(cfg: &ScenarioConfig, master: u64, out: Option<&Path>) -> Result<TrajectoryDataset> {
    let path = out.map(|d| {
        d.join("datasets")
            .join(format!("{}.csv", case_label(&cfg.fleet.cav_set)))
    });
    if let Some(p) = path.as_deref().filter(|p| p.exists()) {
        let data = io::read_dataset(p)?;
        experiment::check_compatible(cfg, &data)?;
        return Ok(data);
    }
    let mut collect_cfg = cfg.clone();
    collect_cfg.seed = collection_seed(master, &cfg.fleet.cav_set);
    let (data, pe) = experiment::collect(&collect_cfg)?;
    if !pe.satisfied {
        return Err(deeplcc_core::Error::NotPersistentlyExciting {
            rank: pe.rank,
            required: pe.required_rank,
        }
        .into());
    }
    if let Some(p) = path {
        let dir = p.parent().expect("joined path");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_dataset(&p, &data)?;
    }
    Ok(data)
}

/// One case without reductions, plus its log when the run completed.
fn run_case(
    base: &ScenarioConfig,
    cav_set: &[usize],
    out: Option<&Path>,
) -> (Result<AsveReport>, Option<SimulationLog>) {
    let attempt = || -> Result<(AsveReport, SimulationLog)> {
        let cfg = base.with_cav_set(cav_set.to_vec())?;
        let data = match cav_set.is_empty() {
            true => None,
            false => Some(dataset_for(&cfg, base.seed, out)?),
        };
        let log = experiment::simulate(&cfg, data.as_ref(), &WallClock::new())?;
        if let Some(dir) = out {
            io::write_run(&dir.join("cases").join(case_label(cav_set)), &log)?;
        }
        experiment::verdict(&log)?;
        Ok((experiment::asve_report(&cfg, &log)?, log))
    };
    match attempt() {
        Ok((report, log)) => (Ok(report), Some(log)),
        Err(e) => (Err(e), None),
    }
}

/// Runs the sweep. Per-case logs, datasets and `table.csv` go to `out` when
/// given; existing datasets there are reused.
pub fn run_sweep(base: &ScenarioConfig, out: Option<&Path>) -> Result<SweepResult> {
    let Experiment::Straight(setup) = &base.experiment else {
        return Err(deeplcc_core::Error::Config("sweeps need an open-road scenario".into()).into());
    };
    base.validate()?;
    let (sets, warnings) = dedup_cav_sets(&setup.cav_sets);
    let mut all = sets.clone();
    if !all.iter().any(|s| s.is_empty()) {
        all.push(Vec::new());
    }
    let mut results: Vec<(Result<AsveReport>, Option<SimulationLog>)> =
        all.par_iter().map(|s| run_case(base, s, out)).collect();
    let baseline = all
        .iter()
        .position(|s| s.is_empty())
        .and_then(|k| results[k].0.as_ref().ok().copied());

    let mut exit_code = 0;
    let rows: Vec<ReportRow> = sets
        .iter()
        .zip(&results)
        .map(|(s, (res, _))| match res {
            Ok(r) => ReportRow {
                cav_set: s.clone(),
                report: Some(match (&baseline, s.is_empty()) {
                    (Some(b), false) => r.against(b),
                    _ => *r,
                }),
                failure: None,
            },
            Err(e) => {
                if exit_code == 0 {
                    exit_code = e.exit_code();
                }
                ReportRow {
                    cav_set: s.clone(),
                    report: None,
                    failure: Some(e.to_string()),
                }
            }
        })
        .collect();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_atomic(&dir.join("table.csv"), &io::report_csv(&rows))?;
    }
    let logs = results
        .iter_mut()
        .take(rows.len())
        .map(|(_, log)| log.take())
        .collect();
    Ok(SweepResult {
        rows,
        logs,
        warnings,
        exit_code,
    })
}
