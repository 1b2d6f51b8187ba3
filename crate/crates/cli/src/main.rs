//! `middleway`: run scenarios, parameter sweeps, the string experiment and
//! the RDS latency analysis, writing plot-ready CSV.

mod cmd;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use middleway::ScenarioConfig;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "middleway", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario config (TOML). Defaults reproduce the canonical scenario.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Dotted config key and TOML value, e.g. `controller.v_offset=4`.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the scenario and write the log, events and report.
    Run,
    /// Run once per value of one config key, or replay a recorded log.
    Sweep(cmd::sweep::SweepArgs),
    /// RDS latency error statistics and histograms.
    Rds(cmd::rds::RdsArgs),
    /// Chain of controlled vehicles behind fast traffic.
    String(cmd::string::StringArgs),
}

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Collision,
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut all = self.overrides.clone();
        if let Some(seed) = self.seed {
            all.push(format!("seed={seed}"));
        }
        all
    }

    pub fn load(&self, extra: &[String]) -> Result<ScenarioConfig, CliError> {
        let mut overrides = self.overrides();
        overrides.extend_from_slice(extra);
        let cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path, &overrides)?,
            None => ScenarioConfig::from_toml_with_overrides("", &overrides)?,
        };
        Ok(cfg)
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    let out = output::OutDir::create(&cli.common.out)?;
    match &cli.command {
        Command::Run => cmd::run::run(&cli.common, &out),
        Command::Sweep(args) => cmd::sweep::run(&cli.common, args, &out),
        Command::Rds(args) => cmd::rds::run(&cli.common, args, &out),
        Command::String(args) => cmd::string::run(&cli.common, args, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Collision) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
