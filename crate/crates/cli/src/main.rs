use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

mod commands;
mod config;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Spectrum,
    Trace,
    Xi,
    Reflectionless,
    BorgVerify,
    ResolventCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Trace => "trace",
            Command::Xi => "xi",
            Command::Reflectionless => "reflectionless",
            Command::BorgVerify => "borg-verify",
            Command::ResolventCheck => "resolvent-check",
        }
    }
}

/// Runs a CMV verification job described by a JSON config.
///
/// Exit status: 0 all checks passed, 1 a check failed, 2 config error,
/// 3 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "cmv", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Boundary grid size, a power of two (overrides `grid_n`).
    #[arg(long = "grid-n")]
    grid_n: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let over = config::Overrides { out: cli.out, seed: cli.seed, grid_n: cli.grid_n };
    let resolved = match config::load(&cli.config, &over) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let name = cli.command.name();
    match commands::run(name, &resolved) {
        Ok(true) => {
            println!("{name}: pass ({})", resolved.config.out.display());
            ExitCode::SUCCESS
        }
        Ok(false) => {
            println!("{name}: FAIL ({})", resolved.config.out.display());
            ExitCode::from(1)
        }
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
