//! Command-line front end: verify a scenario's certificate, simulate its
//! closed loop, do both, or reproduce a bundled example end to end.
//!
//! Exit codes: 0 all verdicts pass, 1 a verdict fails, 2 bad input,
//! 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use descon::error::Error;
use descon::report;
use descon::run::{execute, Command, Overrides};
use descon::scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "descon",
    version,
    about = "Verify and simulate limited-budget output-consensus designs for descriptor multi-agent systems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Integration step override.
    #[arg(long)]
    dt: Option<f64>,
    /// Simulation horizon override.
    #[arg(long)]
    horizon: Option<f64>,
    /// Energy metering horizon override.
    #[arg(long)]
    hbar: Option<f64>,
    /// Seed override for randomized switching schedules.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.txt, report.kv, and trajectory.csv.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the certificate conditions and closed-loop admissibility.
    Verify(RunArgs),
    /// Integrate the switching closed loop and meter the energy budget.
    Simulate(RunArgs),
    /// Verify, then simulate.
    Full(RunArgs),
    /// Run `full` on a bundled example scenario.
    Reproduce {
        /// Which bundled scenario: example1 or example2.
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

fn dispatch(cli: Cli) -> descon::Result<bool> {
    let (scn, command, common) = match cli.cmd {
        Cmd::Verify(a) => (Scenario::load(&a.scenario)?, Command::Verify, a.common),
        Cmd::Simulate(a) => (Scenario::load(&a.scenario)?, Command::Simulate, a.common),
        Cmd::Full(a) => (Scenario::load(&a.scenario)?, Command::Full, a.common),
        Cmd::Reproduce { name, common } => {
            let text = match name.as_str() {
                "example1" => include_str!("../scenarios/example1.toml"),
                "example2" => include_str!("../scenarios/example2.toml"),
                other => {
                    return Err(Error::invalid_input(format!(
                        "unknown bundled scenario \"{other}\"; expected example1 or example2"
                    )))
                }
            };
            (Scenario::from_toml_str(text, &name)?, Command::Full, common)
        }
    };
    let overrides = Overrides {
        dt: common.dt,
        horizon: common.horizon,
        hbar: common.hbar,
        seed: common.seed,
    };
    let report = execute(&scn, command, &overrides, Some(&common.out))?;
    print!("{}", report::format_text(&report));
    report::write_reports(&report, &common.out)?;
    Ok(report.overall)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
