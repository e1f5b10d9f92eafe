//! Scenario-driven front end.
//!
//! Exit codes: 0 when every enabled check passes, 1 on a check failure,
//! 2 on a config error, 3 on a runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::{error, info};
use normshift::scenario::{self, Command, RunOptions, Scenario, ScenarioError};

#[derive(Parser)]
#[command(name = "normshift", version, about = "Force fields admitting the normal shift: simulation and residual checks")]
struct Cli {
    /// Scenario file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default: the scenario's `output`, else out/<name>)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for random-state sampling (default: the scenario's `seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Multiplies every upper-bound threshold
    #[arg(long, global = true, default_value_t = 1.0)]
    threshold_scale: f64,

    #[command(subcommand)]
    command: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Force field tables and gauge checks
    Field {
        #[command(subcommand)]
        action: FieldAction,
    },
    /// Trajectories and the conservation law
    Trajectory,
    /// Normal shift of the configured patches
    Shift,
    /// Section residuals
    Section {
        #[command(subcommand)]
        action: SectionAction,
    },
    /// Reconstruct W from its section
    RecoverW,
    /// Ansatz and 1-form round trips
    RoundTrip,
    /// Every enabled check of the scenario
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Subcommand)]
enum FieldAction {
    Eval,
}

#[derive(Subcommand)]
enum SectionAction {
    Check,
}

#[derive(Subcommand)]
enum ScenarioAction {
    Run,
}

impl Verb {
    fn command(&self) -> Command {
        match self {
            Verb::Field { action: FieldAction::Eval } => Command::FieldEval,
            Verb::Trajectory => Command::Trajectory,
            Verb::Shift => Command::Shift,
            Verb::Section { action: SectionAction::Check } => Command::SectionCheck,
            Verb::RecoverW => Command::RecoverW,
            Verb::RoundTrip => Command::RoundTrip,
            Verb::Scenario { action: ScenarioAction::Run } => Command::ScenarioRun,
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, ScenarioError> {
    let path = cli.config.as_ref().ok_or_else(|| ScenarioError::Config("--config <path> is required".into()))?;
    if !(cli.threshold_scale > 0.0 && cli.threshold_scale.is_finite()) {
        return Err(ScenarioError::Config(format!("--threshold-scale must be positive, got {}", cli.threshold_scale)));
    }
    let scenario = Scenario::load(path)?;
    let opts = RunOptions { seed: cli.seed, out: cli.out.clone(), threshold_scale: cli.threshold_scale };
    let command = cli.command.command();
    info!("running `{}` on scenario {}", command.name(), scenario.name);
    let report = scenario::run(&scenario, command, &opts)?;
    for c in &report.checks {
        println!("{} {} = {:e} ({:?} {:e})", if c.passed { "PASS" } else { "FAIL" }, c.check, c.value, c.bound, c.threshold);
    }
    for c in report.failures() {
        error!("{}: {}", c.check, c.message);
    }
    println!("report written to {}", opts.output_dir(&scenario).join("report.json").display());
    Ok(report.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli).context("normshift") {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let code = e.downcast_ref::<ScenarioError>().map_or(3, ScenarioError::exit_code);
            eprintln!("error: {e:#}");
            ExitCode::from(code as u8)
        }
    }
}
