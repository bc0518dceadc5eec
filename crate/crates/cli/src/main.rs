//! Config-driven command-line front end for single-trajectory prediction-set
//! calibration: simulate trajectories, calibrate radii with certificates,
//! validate the guarantees by Monte Carlo, and sweep one experiment axis.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, OutputFormat};
use rcps_core::CalibrationRule;

#[derive(Parser)]
#[command(
    name = "rcps",
    version,
    about = "Risk-controlling prediction sets from a single trajectory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trajectory and write it as CSV.
    Simulate(CommonArgs),
    /// Calibrate a prediction-set radius and write its certificate.
    Calibrate(CommonArgs),
    /// Run a coverage experiment; write a JSON report and per-trial CSV.
    Validate(CommonArgs),
    /// Sweep one axis (t | k | epsilon | weight preset) into a table.
    Sweep(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the output format.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Override the trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the calibration rule.
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum RuleArg {
    Iid,
    Blocked,
    Weighted,
}

impl From<RuleArg> for CalibrationRule {
    fn from(arg: RuleArg) -> Self {
        match arg {
            RuleArg::Iid => CalibrationRule::IidStandard,
            RuleArg::Blocked => CalibrationRule::Blocked,
            RuleArg::Weighted => CalibrationRule::Weighted,
        }
    }
}

impl CommonArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::from_path(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out = Some(out.clone());
        }
        if let Some(format) = self.format {
            config.format = Some(format);
        }
        if let Some(trials) = self.trials {
            config.trials = Some(trials);
        }
        if let Some(rule) = self.rule {
            config.rule = Some(rule.into());
        }
        Ok(config)
    }
}

fn run() -> Result<commands::Outcome> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(args) => commands::cmd_simulate(&args.load()?),
        Command::Calibrate(args) => commands::cmd_calibrate(&args.load()?),
        Command::Validate(args) => commands::cmd_validate(&args.load()?),
        Command::Sweep(args) => commands::cmd_sweep(&args.load()?),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
