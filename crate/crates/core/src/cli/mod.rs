//! The `entropy-lab` command line.

pub mod config;
pub mod experiments;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

pub use config::{Experiment, ExperimentConfig};
pub use output::{Outcome, Plot, Table};

use crate::error::{LabError, Result};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "ENTROPY_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "entropy-lab", version, about = "Numerical checks of the heat-equation entropy formula")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment (or `all`) and write CSV, SVG and a manifest.
    Run {
        experiment: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the experiments.
    List,
}

pub fn list_experiments() -> Vec<String> {
    Experiment::ALL.iter().map(|e| format!("{} — {}", e.name(), e.anchor())).collect()
}

/// Worker count: the machine's parallelism, capped by `ENTROPY_LAB_THREADS`.
pub fn worker_count() -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(cap) if cap > 0 => available.min(cap),
        _ => available,
    }
}

/// Order-preserving parallel map over scoped threads.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = worker_count().min(items.len()).max(1);
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

struct Plan {
    experiment: Experiment,
    config: ExperimentConfig,
    out: PathBuf,
    seed: u64,
}

fn plan(experiment: &str, config: Option<&Path>, out: Option<PathBuf>, seed: Option<u64>) -> Result<Plan> {
    let experiment: Experiment = experiment.parse()?;
    let config = match config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| LabError::Config(format!("{}: {e}", p.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(named) = config.experiment {
        if named != experiment {
            return Err(LabError::Config(format!("config names experiment '{named}' but '{experiment}' was requested")));
        }
    }
    let targets: Vec<Experiment> = if experiment == Experiment::All {
        Experiment::ALL.iter().copied().filter(|e| *e != Experiment::All).collect()
    } else {
        vec![experiment]
    };
    if experiment == Experiment::All {
        if let Some((key, _)) = config
            .entries
            .iter()
            .find(|(k, _)| !(k == "experiment" || k == "seed" || k.starts_with("output.") || k.starts_with("tolerance.")))
        {
            return Err(LabError::Config(format!("key '{key}' does not apply to experiment 'all'")));
        }
    }
    for e in targets {
        experiments::validate(e, &config)?;
    }
    let out = out
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("entropy-lab-out").join(experiment.name()));
    let seed = seed.or(config.seed).unwrap_or(0);
    Ok(Plan { experiment, config, out, seed })
}

fn run_one(experiment: Experiment, config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<bool> {
    let start = Instant::now();
    let outcome = match experiments::run_experiment(experiment, config, seed) {
        Ok(o) => o,
        Err(LabError::Config(msg)) => return Err(LabError::Config(msg)),
        Err(e) => {
            let mut o = Outcome::default();
            o.check("completed", false, e.to_string());
            o
        }
    };
    output::write_outputs(dir, experiment.name(), seed, &config.entries, &outcome)?;
    eprintln!(
        "{:<18} {} ({:.1} s)",
        experiment.name(),
        if outcome.passed() { "pass" } else { "FAILED" },
        start.elapsed().as_secs_f64()
    );
    for c in outcome.failures() {
        eprintln!("  {}: {}", c.name, c.detail);
    }
    Ok(outcome.passed())
}

fn execute(plan: &Plan) -> Result<bool> {
    if plan.experiment != Experiment::All {
        return run_one(plan.experiment, &plan.config, plan.seed, &plan.out);
    }
    let mut summary = Outcome::default();
    for e in Experiment::ALL.iter().copied().filter(|e| *e != Experiment::All) {
        let passed = run_one(e, &plan.config, plan.seed, &plan.out.join(e.name()))?;
        summary.check(e.name(), passed, if passed { "pass" } else { "see its manifest" });
    }
    fs::create_dir_all(&plan.out)?;
    fs::write(plan.out.join("manifest.txt"), output::manifest("all", plan.seed, &plan.config.entries, &summary))?;
    Ok(summary.passed())
}

/// Runs the command line and returns the process exit code:
/// 0 on success, 1 when a check fails, 2 on a configuration or usage error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match cli.command {
        Command::List => {
            for line in list_experiments() {
                println!("{line}");
            }
            0
        }
        Command::Run { experiment, config, out, seed } => {
            let plan = match plan(&experiment, config.as_deref(), out, seed) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 2;
                }
            };
            match execute(&plan) {
                Ok(true) => 0,
                Ok(false) => 1,
                Err(LabError::Config(msg)) => {
                    eprintln!("error: {msg}");
                    2
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_has_every_experiment() {
        let lines = list_experiments();
        assert_eq!(lines.len(), 11);
        assert!(lines[0].starts_with("monotonicity — "));
        assert!(lines[10].starts_with("all — "));
    }

    #[test]
    fn par_map_keeps_order() {
        let v: Vec<usize> = (0..37).collect();
        assert_eq!(par_map(&v, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with_args(["entropy-lab", "run", "bogus"]), 2);
        assert_eq!(main_with_args(["entropy-lab", "frobnicate"]), 2);
    }
}
