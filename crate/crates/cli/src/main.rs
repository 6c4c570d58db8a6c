//! `spikewalk`: run, verify and size random-walk circuits from scenario files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use spikewalk_core::harness::{
    compare_with_oracle, emit_outputs, parse_scenario, resources, run_replicas, write_report, ScenarioConfig, Status,
};

#[derive(Parser)]
#[command(name = "spikewalk", version, about = "Random walks on spiking neural circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its output files.
    Run {
        scenario: PathBuf,
        /// Output directory; defaults to the scenario's `output_dir` or `out/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Independent replicas, written to `replica-NNN` subdirectories.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Compare the circuit against the Monte-Carlo oracle. Exits 2 if a check fails.
    Verify {
        scenario: PathBuf,
        /// Also write report.json here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print neuron, synapse and spike budgets as JSON.
    Resources { scenario: PathBuf },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut config = parse_scenario(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn output_dir(config: &ScenarioConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(&config.name))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, out, seed, repeats } => {
            let config = load(&scenario, seed)?;
            let dir = output_dir(&config, out);
            let bundles = run_replicas(&config, repeats)?;
            for (i, bundle) in bundles.iter().enumerate() {
                let target = if repeats > 1 { dir.join(format!("replica-{i:03}")) } else { dir.clone() };
                let files = emit_outputs(bundle, &target)?;
                println!("seed {}: wrote {} files to {}", bundle.config.seed, files.len(), target.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { scenario, out, seed } => {
            let config = load(&scenario, seed)?;
            let report = compare_with_oracle(&config);
            for check in &report.checks {
                let tag = match check.status {
                    Status::Pass => "PASS",
                    Status::Fail => "FAIL",
                    Status::Skip => "SKIP",
                };
                println!("{tag}  {:<28} {}", check.name, check.detail);
            }
            if let Some(dir) = out {
                let path = write_report(&report, &dir)?;
                println!("report written to {}", path.display());
            }
            println!("{}", if report.passed { "verification passed" } else { "verification FAILED" });
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Resources { scenario } => {
            let config = load(&scenario, None)?;
            println!("{}", serde_json::to_string_pretty(&resources(&config)?)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
