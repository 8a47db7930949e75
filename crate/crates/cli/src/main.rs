use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochflow::config::{peek_log_level, LogLevel};
use stochflow::suites::Suite;
use stochflow::tolerances::Tolerances;
use stochflow::{commands, CliError, EXIT_NUMERICAL, EXIT_OK};
use stochflow_core::pod::PodOptions;

/// Stochastic geometric fluid models: SQG runs, POD noise extraction,
/// transport experiments and verification suites.
#[derive(Debug, Parser)]
#[command(name = "stochflow", version)]
struct Cli {
    /// JSON configuration file (run-sqg, transport).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run suite experiments one at a time.
    #[arg(long, global = true)]
    serial: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the SQG model.
    RunSqg,
    /// Extract POD modes from a directory of snapshots.
    PodExtract {
        dir: PathBuf,
        #[arg(value_name = "K")]
        k: usize,
        /// Subtract the snapshot mean first.
        #[arg(long)]
        center: bool,
        /// Leray-project snapshots before decomposing.
        #[arg(long)]
        divergence_free: bool,
    },
    /// Advect forms, loops and helicity under a prescribed stochastic flow.
    Transport,
    /// Run a verification suite (operators, strat-ito, kelvin, helicity,
    /// pv-paths, casimirs, pod or all).
    Verify {
        suite: String,
        /// JSON file overriding the shipped tolerances.
        #[arg(long)]
        tolerances: Option<PathBuf>,
    },
}

fn require_config(cli: &Cli) -> Result<&Path, CliError> {
    cli.config
        .as_deref()
        .ok_or_else(|| CliError::Config("this command needs --config <FILE>".into()))
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::RunSqg => {
            let s = commands::run_sqg(require_config(cli)?, cli.seed, cli.out.as_deref())?;
            println!("{}", serde_json::to_string(&s).expect("summary serializes"));
        }
        Command::PodExtract { dir, k, center, divergence_free } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("pod_basis"));
            let options = PodOptions {
                center: *center,
                divergence_free: *divergence_free,
            };
            let s = commands::pod_extract(dir, *k, &out, options)?;
            println!("{}", serde_json::to_string(&s).expect("summary serializes"));
        }
        Command::Transport => {
            let s = commands::transport(require_config(cli)?, cli.seed, cli.out.as_deref())?;
            println!("{}", serde_json::to_string(&s).expect("summary serializes"));
        }
        Command::Verify { suite, tolerances } => {
            let selected = Suite::parse_list(suite).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown suite '{suite}' (expected operators, strat-ito, kelvin, helicity, pv-paths, casimirs, pod or all)"
                ))
            })?;
            let tol = Tolerances::load(tolerances.as_deref())?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("verify_out"));
            let checks = commands::verify(&selected, &tol, cli.serial, &out)?;
            for c in &checks {
                println!("{}", c.describe());
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(EXIT_NUMERICAL);
            }
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = cli.config.as_deref().map(peek_log_level).unwrap_or(LogLevel::Warn);
    env_logger::Builder::new()
        .filter_level(level.filter())
        .parse_default_env()
        .init();
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
