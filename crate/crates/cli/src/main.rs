mod artifacts;
mod checks;
mod config;
mod error;
mod report;
mod run;
mod svg;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RawConfig;
use error::CliError;

/// Seeded gradient-descent experiments on asymmetric low-rank factorization.
///
/// Exit codes: 0 success, 2 validation, 3 divergence, 4 property violation.
#[derive(Parser)]
#[command(name = "lowrank-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides out_dir in the config; default ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed, replacing the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Skip SVG figures.
    #[arg(long, global = true)]
    no_plots: bool,
    /// Allow explicit epsilon/eta in theory mode.
    #[arg(long, global = true)]
    override_theory: bool,
}

#[derive(Subcommand)]
enum Command {
    /// One run: trajectory, phases, conditions, metadata.
    Run,
    /// Grid of runs over the bracketed config axes.
    Sweep,
    /// Randomized checks of the discrete eigenvalue lemmas.
    VerifyLemmas,
    /// Closed-form flow against RK4.
    OracleCompare,
    /// Hash-checked summary of an output directory.
    Report,
}

fn load(cli: &Cli, required: bool) -> Result<Option<RawConfig>, CliError> {
    let raw = match &cli.config {
        Some(path) => RawConfig::load(path)?,
        None if required => return Err(CliError::Validation("--config is required".into())),
        None if cli.seed.is_none() && !cli.override_theory => return Ok(None),
        None => RawConfig::parse("")?,
    };
    Ok(Some(
        raw.with_seed(cli.seed).with_override(cli.override_theory),
    ))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let required = matches!(
        cli.command,
        Command::Run | Command::Sweep | Command::OracleCompare
    );
    let raw = load(cli, required)?;
    let out = cli
        .out
        .clone()
        .or_else(|| raw.as_ref().and_then(|r| r.out_dir()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let defaults = || {
        raw.clone()
            .unwrap_or_else(|| RawConfig::parse("").expect("empty config parses"))
    };
    match cli.command {
        Command::Run => run::cmd_run(&defaults(), &out, !cli.no_plots),
        Command::Sweep => sweep::cmd_sweep(&defaults(), &out),
        Command::VerifyLemmas => checks::cmd_verify_lemmas(&defaults(), &out),
        Command::OracleCompare => checks::cmd_oracle_compare(&defaults(), &out),
        Command::Report => report::cmd_report(raw.as_ref(), &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lowrank-lab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
