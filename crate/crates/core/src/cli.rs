//! Command-line front end. Exit codes: 0 success, 1 estimator or run
//! failure, 2 configuration or input error.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use clap::Parser;

use crate::config::{load_config, EstimateTask, Overrides, RunConfig, RunMode, SimulateTask, Task};
use crate::data::{format_g17, load_csv, scale_outcome};
use crate::error::{Error, Result};
use crate::estimators::{run, EstimateResult, EstimatorId};
use crate::nuisance::fit_nuisances;
use crate::sim::{run_study, write_report_csv, write_sidecar};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Share of failed runs above which a simulation is reported as failed.
const MAX_FAILURE_RATE: f64 = 0.5;

pub const ESTIMATE_COLUMNS: [&str; 8] = [
    "estimator_id",
    "psi_hat",
    "se",
    "ci_lo",
    "ci_hi",
    "eic_mean_abs",
    "n_iter",
    "converged",
];

#[derive(Debug, Parser)]
#[command(name = "twophase", version, about = "ATE estimation under two-phase sampling")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the mode in the configuration.
    #[arg(long, value_enum)]
    pub mode: Option<RunMode>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to the config, then TWOPHASE_THREADS, then all cores.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long, short)]
    pub verbose: bool,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            mode: self.mode,
            seed: self.seed,
            out: self.out.clone(),
            parallelism: self.parallelism,
        }
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let level = if cli.verbose { "debug" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for an error that stopped the run before any estimate was made.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Schema(_)
        | Error::Parse { .. }
        | Error::Validation { .. }
        | Error::InvalidInput(_)
        | Error::Io { .. } => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

pub fn execute(cli: &Cli) -> Result<i32> {
    let cfg = load_config(&cli.config, &cli.overrides())?;
    log::info!("mode {:?}, seed {}, output {}", cfg.mode, cfg.seed, cfg.out.display());
    match &cfg.task {
        Task::Estimate(t) => cmd_estimate(&cfg, t),
        Task::Simulate(t) => cmd_simulate(&cfg, t),
    }
}

fn threads(cfg: &RunConfig) -> usize {
    cfg.parallelism
        .or_else(|| std::env::var("TWOPHASE_THREADS").ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Runs every requested estimator on the configured dataset and writes one
/// CSV row per estimator. A failed estimator yields a `converged = false` row.
pub fn cmd_estimate(cfg: &RunConfig, task: &EstimateTask) -> Result<i32> {
    let ds = load_csv(&task.data, &task.schema)?;
    let scaled = scale_outcome(&ds)?;
    log::info!("{} records, {} in phase 2", ds.n(), ds.n_phase2());
    let results: Vec<(EstimatorId, Result<EstimateResult>)> = match fit_nuisances(&scaled, &task.nuisance) {
        Ok(ns) => task
            .estimators
            .iter()
            .map(|&id| (id, run(&scaled, &ns, id, &task.options)))
            .collect(),
        Err(e) => {
            let msg = e.to_string();
            task.estimators
                .iter()
                .map(|&id| (id, Err(Error::Unidentifiable(format!("nuisance fitting failed: {msg}")))))
                .collect()
        }
    };
    create_out(&cfg.out)?;
    let path = cfg.out.join(&task.output);
    write_estimates(&results, &path)?;
    let mut all_ok = true;
    for (id, r) in &results {
        match r {
            Ok(e) if e.converged => {}
            Ok(_) => {
                all_ok = false;
                eprintln!("warning: {id} did not converge");
            }
            Err(e) => {
                all_ok = false;
                eprintln!("warning: {id} failed: {e}");
            }
        }
    }
    Ok(if all_ok { EXIT_OK } else { EXIT_FAILURE })
}

fn write_estimates(results: &[(EstimatorId, Result<EstimateResult>)], path: &Path) -> Result<()> {
    let io = |source: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(File::create(path).map_err(io)?);
    let csv_err = |e: csv::Error| io(e.into());
    w.write_record(ESTIMATE_COLUMNS).map_err(csv_err)?;
    for (id, r) in results {
        let row = match r {
            Ok(e) => [
                id.to_string(),
                format_g17(e.psi_hat),
                format_g17(e.se),
                format_g17(e.ci95.0),
                format_g17(e.ci95.1),
                format_g17(e.eic_mean_abs),
                e.n_outer_iterations.to_string(),
                e.converged.to_string(),
            ],
            Err(_) => {
                let nan = format_g17(f64::NAN);
                [
                    id.to_string(),
                    nan.clone(),
                    nan.clone(),
                    nan.clone(),
                    nan.clone(),
                    nan,
                    "0".into(),
                    "false".into(),
                ]
            }
        };
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

/// Runs each study cell and writes the metric table plus a metadata sidecar.
pub fn cmd_simulate(cfg: &RunConfig, task: &SimulateTask) -> Result<i32> {
    let threads = threads(cfg);
    let mut reports = Vec::with_capacity(task.cells.len());
    for spec in &task.cells {
        log::info!("{} n={} runs={} on {threads} threads", spec.dgp.name(), spec.n, spec.n_runs);
        let rep = run_study(spec, threads)?;
        log::info!("done in {:.1}s", rep.wall_time_s);
        reports.push(rep);
    }
    create_out(&cfg.out)?;
    let report = cfg.out.join(&task.report);
    write_report_csv(&reports, &report)?;
    write_sidecar(&reports, &report.with_extension("meta.json"))?;

    let mut code = EXIT_OK;
    for rep in &reports {
        for row in rep.rows.iter().filter(|r| r.n_failed as f64 > MAX_FAILURE_RATE * rep.n_runs as f64) {
            code = EXIT_FAILURE;
            let first = rep.failures.iter().find(|f| f.estimator == row.estimator);
            eprintln!(
                "error: {} failed in {}/{} runs of {} n={}{}",
                row.estimator,
                row.n_failed,
                rep.n_runs,
                rep.spec.dgp.name(),
                rep.spec.n,
                first.map(|f| format!(" (seed {}: {})", f.seed, f.message)).unwrap_or_default()
            );
        }
    }
    Ok(code)
}
