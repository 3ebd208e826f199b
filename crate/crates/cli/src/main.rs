//! Benchmark harness for bandits with context distributions.
//!
//! Subcommands:
//! - `run`: execute every configured policy for the configured trial count,
//!   writing one trace CSV per (policy, trial), a `summary.csv` with mean
//!   cumulative regret at the quarter/half/full horizon, and a `bounds.csv`
//!   with regret-bound coverage for theoretical-confidence policies;
//! - `sweep`: cross-product sweep of `beta` or `l` over given values,
//!   emitting `sweep.csv` with the per-policy argmin marked;
//! - `ingest`: validate a directory of group CSVs and print the environment
//!   section to paste into a run config.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime numerical failure.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use distbandit::context::load_group_dir;
use distbandit::sim::{mean_stderr, run_trials, RegretTrace};

use config::{Experiment, Overrides};
use output::{BoundsRow, SummaryRow, SweepRow};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or input data; exit code 1.
    Validation(String),
    /// Numerical or runtime failure during episodes; exit code 2.
    Runtime(String),
}

impl CliError {
    fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
        move |e| CliError::Validation(format!("{}: {e}", path.display()))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "distbandit",
    about = "Deterministic benchmark harness for stochastic bandits with context distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured policy and write traces, summary and bounds.
    Run {
        /// Experiment configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Trial count (overrides the config).
        #[arg(long)]
        trials: Option<u64>,
        /// Suppress progress output.
        #[arg(long)]
        quiet: bool,
    },
    /// Sweep one parameter over a value grid and write sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Parameter to sweep: beta | l.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Validate a directory of group CSVs and print its environment section.
    Ingest {
        /// Directory of group CSV files.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            trials,
            quiet,
        } => config::load(&config, &Overrides { out, seed, trials })
            .and_then(|exp| cmd_run(&exp, quiet)),
        Command::Sweep {
            config,
            param,
            values,
            out,
            seed,
            trials,
            quiet,
        } => config::load(&config, &Overrides { out, seed, trials })
            .and_then(|exp| cmd_sweep(&exp, &param, &values, quiet)),
        Command::Ingest { dir, quiet } => cmd_ingest(&dir, quiet),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Checkpoints reported in summary.csv: quarter, half and full horizon.
fn checkpoints(horizon: usize) -> Vec<usize> {
    let mut ts = vec![(horizon / 4).max(1), (horizon / 2).max(1), horizon];
    ts.dedup();
    ts
}

fn cmd_run(exp: &Experiment, quiet: bool) -> Result<(), CliError> {
    std::fs::create_dir_all(&exp.out).map_err(CliError::io(&exp.out))?;
    let mut summary = Vec::new();
    let mut bounds = Vec::new();
    let mut errors = Vec::new();

    for policy in &exp.policies {
        let results = run_trials(
            exp.scenario.as_scenario(),
            &policy.spec,
            exp.horizon,
            exp.seed,
            exp.trials,
        );
        let mut completed: Vec<&RegretTrace> = Vec::new();
        for (trial, result) in results.iter().enumerate() {
            match result {
                Ok(trace) => {
                    output::write_trace(&exp.out, &policy.name, trace)?;
                    completed.push(trace);
                }
                Err(failure) => {
                    output::write_trace(&exp.out, &policy.name, &failure.partial)?;
                    errors.push(format!("{},{},{}", policy.name, trial, failure.error));
                }
            }
        }
        for t in checkpoints(exp.horizon) {
            let finals: Vec<f64> = completed
                .iter()
                .filter(|tr| tr.len() >= t)
                .map(|tr| tr.regret_at(t))
                .collect();
            let (mean, stderr) = mean_stderr(&finals);
            summary.push(SummaryRow {
                policy: policy.name.clone(),
                t,
                mean,
                stderr,
                trials: finals.len(),
            });
        }
        // Bound coverage for policies whose traces carry an evaluated bound.
        let with_bound: Vec<&RegretTrace> = completed
            .iter()
            .copied()
            .filter(|tr| {
                tr.steps
                    .last()
                    .map(|s| s.bound_rhs.is_some())
                    .unwrap_or(false)
            })
            .collect();
        if !with_bound.is_empty() {
            let covered = with_bound
                .iter()
                .filter(|tr| tr.final_regret() <= tr.steps.last().unwrap().bound_rhs.unwrap())
                .count();
            bounds.push(BoundsRow {
                policy: policy.name.clone(),
                delta: exp.delta,
                trials: with_bound.len(),
                covered,
            });
        }
        if !quiet {
            let finals: Vec<f64> = completed.iter().map(|tr| tr.final_regret()).collect();
            let (mean, stderr) = mean_stderr(&finals);
            println!(
                "policy {}: mean final regret {mean:.6} (se {stderr:.6}) over {} trials{}",
                policy.name,
                finals.len(),
                if completed.len() < exp.trials as usize {
                    format!(", {} aborted", exp.trials as usize - completed.len())
                } else {
                    String::new()
                }
            );
        }
    }

    output::write_summary(&exp.out, &summary)?;
    if !bounds.is_empty() {
        output::write_bounds(&exp.out, &bounds)?;
    }
    output::write_errors(&exp.out, &errors)?;
    if !errors.is_empty() {
        return Err(CliError::Runtime(format!(
            "{} episode(s) aborted; see {}",
            errors.len(),
            exp.out.join("errors.log").display()
        )));
    }
    Ok(())
}

fn cmd_sweep(
    exp: &Experiment,
    param: &str,
    values: &[String],
    quiet: bool,
) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::validation("sweep needs at least one value"));
    }
    enum Grid {
        Beta(Vec<f64>),
        L(Vec<usize>),
    }
    let grid = match param {
        "beta" => Grid::Beta(
            values
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| CliError::validation(format!("bad beta value `{v}`")))
                })
                .collect::<Result<_, _>>()?,
        ),
        "l" => Grid::L(
            values
                .iter()
                .map(|v| match v.parse::<usize>() {
                    Ok(l) if l >= 1 => Ok(l),
                    _ => Err(CliError::validation(format!("bad l value `{v}`"))),
                })
                .collect::<Result<_, _>>()?,
        ),
        other => {
            return Err(CliError::validation(format!(
                "unknown sweep parameter `{other}` (expected beta | l)"
            )))
        }
    };

    std::fs::create_dir_all(&exp.out).map_err(CliError::io(&exp.out))?;
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut errors = Vec::new();
    for policy in &exp.policies {
        let mut policy_rows = Vec::new();
        let specs: Vec<(String, distbandit::sim::PolicySpec)> = match &grid {
            Grid::Beta(betas) => betas
                .iter()
                .map(|b| (format!("{b}"), config::with_beta(&policy.spec, *b)))
                .collect(),
            Grid::L(ls) => ls
                .iter()
                .map(|l| {
                    config::with_l(&policy.spec, *l)
                        .map(|spec| (format!("{l}"), spec))
                        .map_err(|e| CliError::validation(format!("policy {}: {e}", policy.name)))
                })
                .collect::<Result<_, _>>()?,
        };
        for (value, spec) in specs {
            let results = run_trials(
                exp.scenario.as_scenario(),
                &spec,
                exp.horizon,
                exp.seed,
                exp.trials,
            );
            let mut finals = Vec::new();
            for (trial, result) in results.iter().enumerate() {
                match result {
                    Ok(trace) => finals.push(trace.final_regret()),
                    Err(failure) => {
                        errors.push(format!("{},{},{}", policy.name, trial, failure.error))
                    }
                }
            }
            let (mean, stderr) = mean_stderr(&finals);
            if !quiet {
                println!(
                    "policy {} {param}={value}: mean final regret {mean:.6} (se {stderr:.6})",
                    policy.name
                );
            }
            policy_rows.push(SweepRow {
                policy: policy.name.clone(),
                parameter: if matches!(grid, Grid::Beta(_)) {
                    "beta"
                } else {
                    "l"
                },
                value,
                mean,
                stderr,
                selected: false,
            });
        }
        if let Some(best) = policy_rows
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.mean.total_cmp(&b.mean))
            .map(|(i, _)| i)
        {
            policy_rows[best].selected = true;
        }
        rows.extend(policy_rows);
    }
    output::write_sweep(&exp.out, &rows)?;
    output::write_errors(&exp.out, &errors)?;
    if !errors.is_empty() {
        return Err(CliError::Runtime(format!(
            "{} episode(s) aborted; see {}",
            errors.len(),
            exp.out.join("errors.log").display()
        )));
    }
    Ok(())
}

fn cmd_ingest(dir: &Path, quiet: bool) -> Result<(), CliError> {
    let groups = load_group_dir(dir).map_err(|e| CliError::validation(e.to_string()))?;
    if !quiet {
        println!(
            "loaded {} group(s), context dimension {} ({})",
            groups.groups.len(),
            groups.context_dim(),
            groups.coordinates.join(",")
        );
        for (key, dist) in &groups.groups {
            let support = dist.weighted_support().map(|s| s.len()).unwrap_or(0);
            let mean = dist.coordinate_mean();
            let coords: Vec<String> = mean.iter().map(|v| format!("{v:.6}")).collect();
            println!(
                "  group {key}: {support} support point(s), mean [{}]",
                coords.join(", ")
            );
        }
        println!();
        println!("# paste into a run config:");
        println!("[environment]");
        println!("kind = \"empirical\"");
        println!("path = {:?}", dir.display().to_string());
        println!("actions = 50");
    }
    Ok(())
}
