use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::process::Command;

use serde_json::json;

use super::dgp::Dgp;
use super::study::SimReport;
use crate::data::format_g17;
use crate::error::{Error, Result};

pub const REPORT_COLUMNS: [&str; 14] = [
    "dgp",
    "dgp_param",
    "n",
    "estimator",
    "target",
    "reference",
    "n_runs",
    "n_failed",
    "n_unconverged",
    "abs_bias_x1e3",
    "se_x1e2",
    "mse_x1e3",
    "coverage_pct",
    "oracle_coverage_pct",
];

fn dgp_param(d: &Dgp) -> String {
    match *d {
        Dgp::MissingRate { intercept } => format_g17(intercept),
        Dgp::RakingGap { gamma } => format_g17(gamma),
        Dgp::KangDr | Dgp::NearPositivity => String::new(),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Metric table, with bias and MSE x 1e3 and SE x 1e2. Contains no timing, so it is
/// byte-identical across reruns of the same configuration.
pub fn write_report_csv(reports: &[SimReport], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(REPORT_COLUMNS).map_err(csv_err)?;
    let opt = |v: Option<f64>, k: f64| v.map(|x| format_g17(x * k)).unwrap_or_default();
    for rep in reports {
        for row in &rep.rows {
            w.write_record([
                rep.spec.dgp.name().to_string(),
                dgp_param(&rep.spec.dgp),
                rep.spec.n.to_string(),
                row.estimator.to_string(),
                row.target.as_str().to_string(),
                format_g17(row.reference),
                rep.n_runs.to_string(),
                row.n_failed.to_string(),
                row.n_unconverged.to_string(),
                format_g17(row.abs_bias * 1e3),
                opt(row.emp_se, 1e2),
                format_g17(row.mse * 1e3),
                format_g17(row.coverage * 1e2),
                opt(row.oracle_coverage, 1e2),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(io_err(path))
}

fn git_hash() -> Option<String> {
    let out = Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
}

/// Metadata sidecar: specs, seeds, timings, failures and the source revision.
pub fn write_sidecar(reports: &[SimReport], path: &Path) -> Result<()> {
    let cells: Vec<_> = reports
        .iter()
        .map(|r| {
            json!({
                "spec": r.spec,
                "seeds": (0..r.n_runs).map(|k| r.spec.seed(k)).collect::<Vec<_>>(),
                "psi_true": r.psi_true,
                "psi_census": r.psi_census,
                "wall_time_s": r.wall_time_s,
                "rows": r.rows,
                "failures": r.failures,
            })
        })
        .collect();
    let doc = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "git_hash": git_hash(),
        "cells": cells,
    });
    let mut f = File::create(path).map_err(io_err(path))?;
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::InvalidInput(e.to_string()))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}
