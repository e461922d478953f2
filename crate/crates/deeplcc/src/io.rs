//! CSV formats for datasets, simulation logs and report tables.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! dataset read back is bit-identical and identical runs give identical files.

use std::io::Write;
use std::path::Path;

use deeplcc_core::controller::ControlDiagnostics;
use deeplcc_core::fleet::{EquilibriumState, SimulationLog};
use deeplcc_core::hankel::TrajectoryDataset;
use deeplcc_core::metrics::AsveReport;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Dataset columns: `t, u1..um, eps, v1..vn, s1..sm, eq_v, eq_s`. Outputs are
/// raw measurements; the equilibrium they were collected around is repeated
/// on every row.
pub fn dataset_csv(d: &TrajectoryDataset) -> Vec<u8> {
    let (n, m) = (d.n, d.m);
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|j| format!("u{j}")));
    header.push("eps".into());
    header.extend((1..=n).map(|i| format!("v{i}")));
    header.extend((1..=m).map(|j| format!("s{j}")));
    header.extend(["eq_v".into(), "eq_s".into()]);
    let eq = d.equilibrium;
    let rows = (0..d.len()).map(|k| {
        let mut row = vec![num(k as f64 * d.dt)];
        row.extend(d.u.column(k).iter().map(|&x| num(x)));
        row.push(num(d.eps[k]));
        row.extend(d.y_raw.column(k).iter().map(|&x| num(x)));
        row.extend([num(eq.v_star), num(eq.s_star)]);
        row
    });
    csv_bytes(&header, rows)
}

pub fn write_dataset(path: &Path, d: &TrajectoryDataset) -> Result<()> {
    write_atomic(path, &dataset_csv(d))
}

pub fn read_dataset(path: &Path) -> Result<TrajectoryDataset> {
    let bad = |msg: String| Error::format(path, msg);
    let mut r = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let header: Vec<String> = r
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let count = |p: char| {
        header
            .iter()
            .filter(|h| h.starts_with(p) && h[1..].parse::<usize>().is_ok())
            .count()
    };
    let (m, n) = (count('u'), count('v'));
    let width = 2 * m + n + 4;
    if header.len() != width || header[0] != "t" || header[m + 1] != "eps" {
        return Err(bad(format!("unexpected dataset header {header:?}")));
    }

    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let vals = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
        if vals.len() != width {
            return Err(bad(format!("row {} has {} fields", line + 1, vals.len())));
        }
        rows.push(vals);
    }
    if rows.len() < 2 {
        return Err(bad("dataset needs at least two samples".into()));
    }
    let t = rows.len();
    let dt = rows[1][0] - rows[0][0];
    let eq = EquilibriumState {
        v_star: rows[0][width - 2],
        s_star: rows[0][width - 1],
    };
    let u = DMatrix::from_fn(m, t, |j, k| rows[k][1 + j]);
    let eps = DVector::from_fn(t, |k, _| rows[k][m + 1]);
    let y = DMatrix::from_fn(n + m, t, |i, k| rows[k][m + 2 + i]);
    Ok(TrajectoryDataset::new(dt, n, m, u, eps, y, eq)?)
}

/// `t,veh_id,pos,vel,acc,spacing,is_cav,cmd_vel`, one row per vehicle and step.
pub fn log_csv(log: &SimulationLog) -> Vec<u8> {
    let header: Vec<String> = [
        "t", "veh_id", "pos", "vel", "acc", "spacing", "is_cav", "cmd_vel",
    ]
    .map(String::from)
    .to_vec();
    let rows = log.records.iter().flat_map(|rec| {
        rec.vehicles.iter().map(move |v| {
            vec![
                num(rec.time),
                v.id.to_string(),
                num(v.state.position),
                num(v.state.velocity),
                num(v.state.acceleration),
                num(v.state.spacing),
                u8::from(v.is_cav).to_string(),
                num(v.cmd_velocity),
            ]
        })
    });
    csv_bytes(&header, rows)
}

/// One row per controller solve.
pub fn diagnostics_csv(diag: &[ControlDiagnostics]) -> Vec<u8> {
    let header: Vec<String> = [
        "t",
        "v_star",
        "s_star",
        "objective",
        "sigma_norm",
        "iterations",
        "status",
        "source",
        "solve_time_ms",
        "u_min",
        "u_max",
        "spacing_err_min",
        "spacing_err_max",
    ]
    .map(String::from)
    .to_vec();
    let rows = diag.iter().map(|d| {
        vec![
            num(d.time),
            num(d.v_star),
            num(d.s_star),
            num(d.objective),
            num(d.sigma_norm),
            d.iterations.to_string(),
            format!("{:?}", d.status),
            d.source.as_str().to_string(),
            num(d.solve_time_ms),
            num(d.planned_input_range.0),
            num(d.planned_input_range.1),
            num(d.predicted_spacing_range.0),
            num(d.predicted_spacing_range.1),
        ]
    });
    csv_bytes(&header, rows)
}

pub fn events_csv(log: &SimulationLog) -> Vec<u8> {
    let header = vec!["event".to_string(), "t".to_string()];
    let rows = log
        .events
        .iter()
        .map(|(name, t)| vec![name.clone(), num(*t)]);
    csv_bytes(&header, rows)
}

/// Writes `log.csv`, `diagnostics.csv` and `events.csv` into `dir`.
pub fn write_run(dir: &Path, log: &SimulationLog) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("log.csv"), &log_csv(log))?;
    write_atomic(
        &dir.join("diagnostics.csv"),
        &diagnostics_csv(&log.diagnostics),
    )?;
    write_atomic(&dir.join("events.csv"), &events_csv(log))
}

/// One line of an ASVE comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub cav_set: Vec<usize>,
    pub report: Option<AsveReport>,
    /// Why the case produced no usable result.
    pub failure: Option<String>,
}

impl ReportRow {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// `{}` for the empty set, `{1,3}` otherwise.
pub fn format_cav_set(s: &[usize]) -> String {
    let inner: Vec<String> = s.iter().map(|i| i.to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

/// `cav_set,asve_ee,asve_pe,reduction_ee,reduction_pe,t0,tf,status,reason`.
pub fn report_csv(rows: &[ReportRow]) -> Vec<u8> {
    let header: Vec<String> = [
        "cav_set",
        "asve_ee",
        "asve_pe",
        "reduction_ee",
        "reduction_pe",
        "t0",
        "tf",
        "status",
        "reason",
    ]
    .map(String::from)
    .to_vec();
    let rows = rows.iter().map(|row| {
        let r = row.report.as_ref();
        vec![
            format_cav_set(&row.cav_set),
            opt(r.map(|r| r.asve_estimated)),
            opt(r.map(|r| r.asve_prescribed)),
            opt(r.and_then(|r| r.reduction_estimated)),
            opt(r.and_then(|r| r.reduction_prescribed)),
            opt(r.map(|r| r.window.0)),
            opt(r.map(|r| r.window.1)),
            if row.is_ok() { "ok" } else { "failed" }.to_string(),
            row.failure.clone().unwrap_or_default(),
        ]
    });
    csv_bytes(&header, rows)
}
