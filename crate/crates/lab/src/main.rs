use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use meanfield_lab::config::parse_override;
use meanfield_lab::exec::threads_from_env;
use meanfield_lab::{execute, parse_and_validate, Experiment, LabResult};

/// Numerical laboratory for two-layer networks in the mean-field regime.
///
/// Any other `--section.key=value` argument overrides the config file; values are
/// parsed as JSON and fall back to plain strings.
#[derive(Debug, Parser)]
#[command(name = "meanfield-lab", version)]
struct Cli {
    /// One of: run-sgd, run-coupled, gap-scaling, gaussians-demo,
    /// kernel-crossover, fokker-planck-check, krr-check.
    experiment: String,
    /// JSON config file; omitted keys take the experiment's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Every `--key` other than clap's own flags is an override, written
/// `--a.b=v` or `--a.b v`; the rest is left for clap.
const CLAP_FLAGS: [&str; 3] = ["config", "help", "version"];

fn split_args(args: Vec<String>) -> (Vec<String>, Vec<String>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let key = a.strip_prefix("--").map(|k| k.split('=').next().unwrap_or(k));
        match key {
            Some(k) if !k.is_empty() && !CLAP_FLAGS.contains(&k) => {
                if a.contains('=') {
                    overrides.push(a);
                } else {
                    let v = it.next().unwrap_or_default();
                    overrides.push(format!("{a}={v}"));
                }
            }
            _ => rest.push(a),
        }
    }
    (rest, overrides)
}

fn run(cli: Cli, overrides: &[String]) -> LabResult<()> {
    let experiment = Experiment::from_name(&cli.experiment).ok_or_else(|| {
        let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
        meanfield_lab::LabError::config(format!(
            "unknown experiment {:?}; expected one of {}",
            cli.experiment,
            names.join(", ")
        ))
    })?;
    let overrides = overrides.iter().map(|o| parse_override(o)).collect::<LabResult<Vec<_>>>()?;
    let resolved = parse_and_validate(experiment, cli.config.as_deref(), &overrides)?;
    let (outcome, written) = execute(&resolved, threads_from_env()?)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for p in &written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let (rest, overrides) = split_args(std::env::args().collect());
    let cli = Cli::parse_from(rest);
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
