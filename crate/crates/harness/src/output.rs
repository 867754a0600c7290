use std::fs;
use std::path::{Path, PathBuf};

use crf_core::functionals::ReportRow;

use crate::config::{ExperimentConfig, OUT_DIR_ENV};
use crate::error::HarnessError;
use crate::outcome::{Outcome, Table};

pub const RUN_HEADER: [&str; 15] = [
    "t",
    "E",
    "W",
    "dE_fd",
    "dE_analytic",
    "dW_fd",
    "dW_analytic",
    "term1",
    "term2",
    "term3",
    "term4",
    "min_p",
    "constraint_drift",
    "mass",
    "min_metric_eig",
];

/// Output directory: the explicit argument, then the environment, then the
/// config, then `out`.
pub fn resolve_out_dir(cli: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    cfg.run.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn record(r: &ReportRow<f64>) -> [String; 15] {
    let v = [
        r.t,
        r.e,
        r.w,
        r.de_fd,
        r.de_analytic,
        r.dw_fd,
        r.dw_analytic,
        r.terms[0],
        r.terms[1],
        r.terms[2],
        r.terms[3],
        r.min_p,
        r.constraint_drift,
        r.mass,
        r.min_metric_eig,
    ];
    v.map(|x| x.to_string())
}

pub fn write_run_csv(path: &Path, rows: &[ReportRow<f64>]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RUN_HEADER)?;
    for r in rows {
        w.write_record(record(r))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_table(dir: &Path, table: &Table) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(dir.join(&table.file))?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush().map_err(io_err(dir))?;
    Ok(())
}

/// Writes everything an outcome carries into `dir`, creating it if needed.
/// Returns the files written.
pub fn write_outcome(dir: &Path, cfg: &ExperimentConfig, outcome: &Outcome) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let run_csv = dir.join("run.csv");
    write_run_csv(&run_csv, &outcome.rows)?;
    written.push(run_csv);

    for t in &outcome.tables {
        write_table(dir, t)?;
        written.push(dir.join(&t.file));
    }

    if cfg.run.checkpoint {
        if let Some(run) = &outcome.trajectory {
            let path = dir.join("trajectory.bin");
            crf_core::checkpoint::save(&path, &run.traj).map_err(io_err(&path))?;
            written.push(path);
        }
    }

    let mut report = outcome.report_json();
    report["seed"] = cfg.run.seed.into();
    report["config"] = serde_json::to_value(cfg)?;
    let path = dir.join("report.json");
    let text = serde_json::to_string_pretty(&report)? + "\n";
    fs::write(&path, text).map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}
