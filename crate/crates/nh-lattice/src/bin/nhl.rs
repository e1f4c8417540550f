use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nh_lattice::runner::{self, Job, WORKERS_ENV};

#[derive(Parser)]
#[command(
    name = "nhl",
    version,
    about = "Dissipative lattice experiments from JSON configs"
)]
#[command(after_help = format!("Sweep workers: set {WORKERS_ENV} (default: all cores).\nExit status: 0 ok, 1 I/O, 2 invalid config, 3 numerical failure (see diagnostics.json)."))]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a config; a config with a grid runs every point.
    Run { config: PathBuf },
    /// Execute a config over its parameter grid.
    Sweep { config: PathBuf },
    /// Check a config without computing anything.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (path, cmd) = match &cli.cmd {
        Cmd::Run { config } => (config, "run"),
        Cmd::Sweep { config } => (config, "sweep"),
        Cmd::Validate { config } => (config, "validate"),
    };
    let job = match Job::load(path) {
        Ok(j) => j,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(runner::exit_code(&e) as u8);
        }
    };
    let outcome = match cmd {
        "run" => runner::run(&job, false),
        "sweep" => runner::run(&job, true),
        _ => runner::validate(&job),
    };
    if outcome.code == 0 {
        println!("{}", outcome.message);
    } else {
        eprintln!("error: {}", outcome.message);
    }
    ExitCode::from(outcome.code as u8)
}
