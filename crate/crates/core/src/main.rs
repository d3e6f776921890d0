use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use radfix::cli::{run, CliCommand, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "radfix",
    about = "Radial stationary profiles of a self-attracting system: solve, certify, verify, sweep",
    disable_help_subcommand = true
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate the integral map to a fixed point; write profile CSV and report JSON.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the contraction certificate (and estimate margins) for the config.
    Certify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve, then cross-check against an independent shooting construction.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve across a list of masses and tabulate the results.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated masses, e.g. 0.05,0.1,0.2
        #[arg(long)]
        mass_list: Option<String>,
    },
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            // Usage problems share the config exit code; help/version print
            // normally and exit clean.
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG as u8) } else { ExitCode::SUCCESS };
        }
    };
    let code = match args.command {
        Command::Solve { config } => run(CliCommand::Solve, &config),
        Command::Certify { config } => run(CliCommand::Certify, &config),
        Command::Verify { config } => run(CliCommand::Verify, &config),
        Command::Sweep { config, mass_list } => run(CliCommand::Sweep { mass_list }, &config),
    };
    ExitCode::from(code as u8)
}
