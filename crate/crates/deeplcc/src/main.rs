use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deeplcc::clock::WallClock;
use deeplcc::config::{Overrides, ScenarioConfig};
use deeplcc::core::hankel::PeDiagnostic;
use deeplcc::error::{Error, Result};
use deeplcc::io::{self, ReportRow};
use deeplcc::{experiment, sweep};

/// Data-driven leading cruise control experiments.
///
/// Exit status: 0 success, 2 configuration or input error, 3 data not
/// persistently exciting, 4 collision, 5 solver failure.
#[derive(Parser)]
#[command(name = "deeplcc", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run the offline excitation experiment and write the dataset CSV.
    Collect {
        #[command(flatten)]
        common: Common,
        /// Dataset file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one scenario and write log, diagnostics and report CSVs.
    Run {
        #[command(flatten)]
        common: Common,
        /// Pre-collected dataset; required when the fleet has CAVs.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the CAV placements listed in the scenario file.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Output directory; datasets found in `<out>/datasets` are reused.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a dataset against the scenario's excitation requirement.
    CheckPe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Turn off measurement noise.
    #[arg(long)]
    disable_noise: bool,
    /// Turn off sensing and computation delays.
    #[arg(long)]
    disable_delay: bool,
    /// Override the actuator time constant, s.
    #[arg(long)]
    tau: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            disable_noise: self.disable_noise,
            disable_delay: self.disable_delay,
            tau: self.tau,
        })?;
        Ok(cfg)
    }
}

fn print_pe(pe: &PeDiagnostic) {
    println!(
        "persistent excitation: rank {} of {} required -> {}",
        pe.rank,
        pe.required_rank,
        if pe.satisfied { "ok" } else { "NOT satisfied" }
    );
    if let Some(s) = pe.shortfall {
        println!("  {s:?}");
    }
}

fn not_pe(pe: &PeDiagnostic) -> Error {
    deeplcc::core::Error::NotPersistentlyExciting {
        rank: pe.rank,
        required: pe.required_rank,
    }
    .into()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn collect(common: &Common, out: &Path) -> Result<i32> {
    let cfg = common.load()?;
    let (data, pe) = experiment::collect(&cfg)?;
    print_pe(&pe);
    if !pe.satisfied {
        return Err(not_pe(&pe));
    }
    io::write_dataset(out, &data)?;
    println!("wrote {} samples to {}", data.len(), out.display());
    Ok(0)
}

fn run(common: &Common, dataset: Option<&Path>, out: &Path) -> Result<i32> {
    let cfg = common.load()?;
    let data = dataset.map(io::read_dataset).transpose()?;
    let result = experiment::run(&cfg, data.as_ref(), &WallClock::new())?;
    create_dir(out)?;
    io::write_run(out, &result.log)?;
    let mut rows = Vec::new();
    if let Some((base_log, base_report)) = &result.baseline {
        io::write_run(&out.join("baseline"), base_log)?;
        rows.push(ReportRow {
            cav_set: vec![],
            report: Some(*base_report),
            failure: experiment::verdict(base_log).err().map(|e| e.to_string()),
        });
    }
    let verdict = experiment::verdict(&result.log);
    rows.push(ReportRow {
        cav_set: cfg.fleet.cav_set.clone(),
        report: Some(result.report),
        failure: verdict.as_ref().err().map(|e| e.to_string()),
    });
    io::write_atomic(&out.join("report.csv"), &io::report_csv(&rows))?;
    let r = &result.report;
    println!(
        "ASVE over [{}, {}] s: estimated {:.5}, prescribed {:.5}",
        r.window.0, r.window.1, r.asve_estimated, r.asve_prescribed
    );
    if let (Some(ee), Some(pe)) = (r.reduction_estimated, r.reduction_prescribed) {
        println!(
            "reduction vs. all-human baseline: {:.1}% (EE), {:.1}% (PE)",
            ee * 100.0,
            pe * 100.0
        );
    }
    println!("wrote {}", out.display());
    verdict.map(|_| 0)
}

fn run_sweep(common: &Common, out: &Path) -> Result<i32> {
    let cfg = common.load()?;
    let result = sweep::run_sweep(&cfg, Some(out))?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    for row in &result.rows {
        let label = io::format_cav_set(&row.cav_set);
        match (&row.report, &row.failure) {
            (Some(r), None) => println!(
                "{label:>8}  ASVE {:.5} / {:.5}  reduction {} / {}",
                r.asve_estimated,
                r.asve_prescribed,
                percent(r.reduction_estimated),
                percent(r.reduction_prescribed)
            ),
            (_, failure) => println!("{label:>8}  failed: {}", failure.as_deref().unwrap_or("")),
        }
    }
    println!("wrote {}", out.join("table.csv").display());
    Ok(result.exit_code)
}

fn percent(x: Option<f64>) -> String {
    x.map(|r| format!("{:.1}%", r * 100.0))
        .unwrap_or_else(|| "-".into())
}

fn check_pe(common: &Common, dataset: &Path) -> Result<i32> {
    let cfg = common.load()?;
    let data = io::read_dataset(dataset)?;
    let pe = experiment::check_pe(&cfg, &data)?;
    print_pe(&pe);
    if pe.satisfied {
        Ok(0)
    } else {
        Err(not_pe(&pe))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.verb {
        Verb::Collect { common, out } => collect(common, out),
        Verb::Run {
            common,
            dataset,
            out,
        } => run(common, dataset.as_deref(), out),
        Verb::Sweep { common, out } => run_sweep(common, out),
        Verb::CheckPe { common, dataset } => check_pe(common, dataset),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
