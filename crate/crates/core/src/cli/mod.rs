//! Project files and the command-line workflows.
//!
//! `check`, `simulate` and `generate` read a JSON project file; the
//! benchmark reproduction defaults to the bundled two-mode example. Exit
//! codes: 0 success, 1 refused or diverged, 2 invalid input.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    bundled_config, check_with_signal, cmd_check, cmd_generate, cmd_reproduce_benchmark, cmd_simulate,
    load_bundled, CliError, CommandOutcome, ExitStatus, RunOptions,
};
pub use config::{load_config, parse_config, ConfigError, ConfigIssue, ProjectConfig};
pub use report::Report;

#[derive(Debug, Parser)]
#[command(name = "switched-iss", version, about = "ISS certificates and simulation for switched nonlinear systems")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
    /// Project file, or the name of a bundled one (example_sec4, scalar_linear).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory for reports and CSV files.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides the simulation seed of the project file.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Do not fail when a simulated run diverges.
    #[arg(long, global = true)]
    pub allow_divergence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Run the sampled checks and assemble the certificate.
    Check,
    /// Simulate a seeded batch and check trajectories against the bounds.
    Simulate,
    /// Generate the configured switching signal.
    Generate,
    /// Reproduce the bundled two-mode benchmark end to end.
    #[command(name = "reproduce-sec4")]
    ReproduceSec4,
}

fn resolve_config(args: &Args) -> Result<ProjectConfig, CliError> {
    match &args.config {
        Some(p) if p.exists() => Ok(load_config(p)?),
        Some(p) => match p.to_str().and_then(bundled_config) {
            Some(_) => load_bundled(p.to_str().unwrap_or_default()),
            None => Ok(load_config(p)?),
        },
        None if args.command == Command::ReproduceSec4 => load_bundled("example_sec4"),
        None => Err(CliError::Missing("--config PATH is required".into())),
    }
}

/// Parses `argv`, runs the command, prints the report, and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitStatus::Invalid.code() } else { 0 };
        }
    };
    let outcome = resolve_config(&args).and_then(|cfg| {
        let opts = RunOptions {
            out_dir: args.out.clone(),
            seed: args.seed,
            allow_divergence: args.allow_divergence,
        };
        match args.command {
            Command::Check => cmd_check(&cfg, &opts),
            Command::Simulate => cmd_simulate(&cfg, &opts),
            Command::Generate => cmd_generate(&cfg, &opts),
            Command::ReproduceSec4 => cmd_reproduce_benchmark(&cfg, &opts),
        }
    });
    match outcome {
        Ok(o) => {
            print!("{}", o.report);
            o.status.code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.status().code()
        }
    }
}
