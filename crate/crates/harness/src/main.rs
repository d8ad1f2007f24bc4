use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pcahn::commands::{execute, Command, Invocation};

#[derive(Parser)]
#[command(name = "pcahn", version, about = "Experiments with the p-Laplacian Cahn-Hilliard model")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration file.
    #[arg(long, short)]
    config: PathBuf,
    /// Output root; overrides $PCAHN_OUT and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and long checks.
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Write SVG plots.
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Potential tables, constants and critical points.
    Potential(Common),
    /// Stationary profiles and their residuals.
    Steady(Common),
    /// Compactly supported pulses and transition distances.
    Pulse(Common),
    /// One layered run with exit detection.
    Simulate(Common),
    /// Exit times over a list of epsilons.
    Sweep(Common),
    /// Scaling fits of an exit-time table.
    Fit(Common),
    /// Acceptance checks.
    Check(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, c) = match cli.command {
        Cmd::Potential(c) => (Command::Potential, c),
        Cmd::Steady(c) => (Command::Steady, c),
        Cmd::Pulse(c) => (Command::Pulse, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Fit(c) => (Command::Fit, c),
        Cmd::Check(c) => (Command::Check, c),
    };
    let inv = Invocation {
        command,
        config: c.config,
        out: c.out,
        workers: c.workers,
        svg: c.svg,
    };
    match execute(&inv) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
