//! Artifact writers. All real numbers carry 17 significant digits so reruns
//! under the same configuration are byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use distbandit::sim::RegretTrace;

use crate::CliError;

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace(dir: &Path, policy: &str, trace: &RegretTrace) -> Result<(), CliError> {
    let path = dir.join(format!("trace_{policy}_{}.csv", trace.trial));
    let mut w = BufWriter::new(File::create(&path).map_err(CliError::io(&path))?);
    trace.write_csv(&mut w).map_err(CliError::io(&path))?;
    Ok(())
}

pub struct SummaryRow {
    pub policy: String,
    pub t: usize,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

pub fn write_summary(dir: &Path, rows: &[SummaryRow]) -> Result<(), CliError> {
    let path = dir.join("summary.csv");
    let mut w = BufWriter::new(File::create(&path).map_err(CliError::io(&path))?);
    writeln!(w, "policy,t,mean_regret_cum,stderr,trials").map_err(CliError::io(&path))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.policy,
            r.t,
            fmt(r.mean),
            fmt(r.stderr),
            r.trials
        )
        .map_err(CliError::io(&path))?;
    }
    Ok(())
}

pub struct BoundsRow {
    pub policy: String,
    pub delta: f64,
    pub trials: usize,
    pub covered: usize,
}

pub fn write_bounds(dir: &Path, rows: &[BoundsRow]) -> Result<(), CliError> {
    let path = dir.join("bounds.csv");
    let mut w = BufWriter::new(File::create(&path).map_err(CliError::io(&path))?);
    writeln!(w, "policy,delta,trials,covered,fraction,target").map_err(CliError::io(&path))?;
    for r in rows {
        let fraction = r.covered as f64 / r.trials as f64;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.policy,
            fmt(r.delta),
            r.trials,
            r.covered,
            fmt(fraction),
            fmt(1.0 - r.delta)
        )
        .map_err(CliError::io(&path))?;
    }
    Ok(())
}

pub struct SweepRow {
    pub policy: String,
    pub parameter: &'static str,
    pub value: String,
    pub mean: f64,
    pub stderr: f64,
    pub selected: bool,
}

pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let path = dir.join("sweep.csv");
    let mut w = BufWriter::new(File::create(&path).map_err(CliError::io(&path))?);
    writeln!(w, "policy,parameter,value,mean_final_regret,stderr,selected")
        .map_err(CliError::io(&path))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.policy,
            r.parameter,
            r.value,
            fmt(r.mean),
            fmt(r.stderr),
            if r.selected { 1 } else { 0 }
        )
        .map_err(CliError::io(&path))?;
    }
    Ok(())
}

pub fn write_errors(dir: &Path, lines: &[String]) -> Result<(), CliError> {
    if lines.is_empty() {
        return Ok(());
    }
    let path = dir.join("errors.log");
    let mut w = BufWriter::new(File::create(&path).map_err(CliError::io(&path))?);
    for line in lines {
        writeln!(w, "{line}").map_err(CliError::io(&path))?;
    }
    Ok(())
}
