mod commands;
mod config;
mod output;
mod suites;

use std::process::ExitCode;

use clap::Parser;

use config::{Cli, Command, RunConfig};

/// Errors that end a run, with their exit codes.
#[derive(Debug)]
pub enum Failure {
    /// invalid configuration, exit code 2
    Config(String),
    /// failed computation, exit code 3
    Compute(String),
}

fn set_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("MODULI_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Config(format!("MODULI_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Compute(e.to_string()))
}

/// Runs the command; the flag is false when a check did not pass.
fn run(cli: Cli) -> Result<bool, Failure> {
    set_threads()?;
    let cfg = RunConfig::from_cli(cli)?;
    let (table, ok) = match cfg.command {
        Command::Volumes => (commands::volumes(&cfg)?, true),
        Command::Psi => (commands::psi(&cfg)?, true),
        Command::Twist => (commands::twist(&cfg)?, true),
        Command::Graphs => (commands::graphs(&cfg)?, true),
        Command::Mcshane => (commands::mcshane(&cfg)?, true),
        Command::Verlinde => (commands::verlinde(&cfg)?, true),
        Command::AiryCheck => commands::airy_check(&cfg)?,
        Command::Verify => suites::verify(&cfg)?,
    };
    let bytes = table.render(commands::default_format(&cfg))?;
    output::emit(&bytes, cfg.output.as_deref())?;
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
