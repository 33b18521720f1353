//! Aggregation of run traces into one comparison table.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use mopol::driver::RunTrace;

use crate::{CmdResult, Failure};

fn collect(path: &Path, out: &mut Vec<PathBuf>) -> CmdResult<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        // sorted so the table order does not depend on the file system
        entries.sort();
        for p in entries {
            if p.is_dir() {
                collect(&p, out)?;
            } else if p.file_name().is_some_and(|n| n == "trace.csv") {
                out.push(p);
            }
        }
        Ok(())
    } else if path.is_file() {
        out.push(path.to_path_buf());
        Ok(())
    } else {
        Err(Failure::Invalid(format!("{} does not exist", path.display())))
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Quartile means of the acquisition time over proposed points only.
fn acquisition_quartiles(trace: &RunTrace) -> (f64, f64) {
    let acq: Vec<f64> = trace
        .records
        .iter()
        .filter(|r| r.acquisition_value.is_some())
        .map(|r| r.acquisition_seconds)
        .collect();
    if acq.is_empty() {
        return (0.0, 0.0);
    }
    let q = (acq.len() / 4).max(1);
    (mean(&acq[..q]), mean(&acq[acq.len() - q..]))
}

pub fn cmd_report(paths: &[PathBuf], out: Option<&Path>) -> CmdResult {
    let mut files = Vec::new();
    for p in paths {
        collect(p, &mut files)?;
    }
    if files.is_empty() {
        return Err(Failure::Invalid("no trace.csv files found".into()));
    }
    let sink: Box<dyn std::io::Write> = match out {
        Some(p) => Box::new(
            std::fs::File::create(p).map_err(|e| Failure::Other(format!("cannot write {}: {e}", p.display())))?,
        ),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Failure::Other(e.to_string());
    w.write_record([
        "run",
        "iterations",
        "final_hypervolume",
        "total_seconds",
        "mean_fit_seconds",
        "mean_bootstrap_seconds",
        "mean_acquisition_seconds",
        "acquisition_first_quartile",
        "acquisition_last_quartile",
    ])
    .map_err(csv_err)?;
    for f in &files {
        let trace = RunTrace::read_csv(f)?;
        let r = &trace.records;
        let col = |g: fn(&mopol::driver::TraceRecord) -> f64| r.iter().map(g).collect::<Vec<f64>>();
        let (first, last) = acquisition_quartiles(&trace);
        let run = f.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(f);
        w.write_record([
            run.display().to_string(),
            r.len().to_string(),
            r.last().map_or(0.0, |x| x.hypervolume).to_string(),
            col(|x| x.total_seconds()).iter().sum::<f64>().to_string(),
            mean(&col(|x| x.fit_seconds)).to_string(),
            mean(&col(|x| x.bootstrap_seconds)).to_string(),
            mean(&col(|x| x.acquisition_seconds)).to_string(),
            first.to_string(),
            last.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Failure::Other(e.to_string()))?;
    Ok(ExitCode::SUCCESS)
}
