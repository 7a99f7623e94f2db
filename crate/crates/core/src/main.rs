use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use banach_sd::run::{execute_file, Overrides};

/// Projected steepest descent with discrepancy stopping, single- and multi-level.
#[derive(Parser)]
#[command(name = "banach-sd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the run described by a TOML configuration file.
    Run {
        config: PathBuf,
        /// Per-iteration CSV trace (overrides output.trace_path).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// TOML summary (overrides output.summary_path).
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Seed for generated noise (overrides solver.seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    let Cli { command: Command::Run { config, trace, summary, seed, quiet } } = Cli::parse();
    let code = execute_file(&config, &Overrides { trace, summary, seed, quiet });
    ExitCode::from(code as u8)
}
