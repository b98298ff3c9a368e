//! `dhym`: batch front-end for the phase-flow laboratory.
//!
//! Exit codes: 0 ok, 1 check failed, 2 invalid arguments or configuration,
//! 3 initial potential not almost calibrated, 4 no top-branch angle,
//! 5 a step left the calibrated strip.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_NOT_CALIBRATED: u8 = 3;
pub const EXIT_BRANCH: u8 = 4;
pub const EXIT_LEFT_RANGE: u8 = 5;

#[derive(Parser)]
#[command(name = "dhym", version, about = "Tangent Lagrangian phase flow on flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the strip and certify concavity of tan(theta - theta_hat).
    VerifyConcavity(VerifyArgs),
    /// Run one flow from a JSON config.
    RunFlow(ConfigArgs),
    /// Check the pointwise subsolution condition.
    CheckSubsolution(SubsolutionArgs),
    /// Run TLPF and LBMCF from the same initial potential.
    CompareFlows(ConfigArgs),
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub n: usize,
    /// Target phase to certify; must lie in the top branch unless
    /// `--expect-failure` is given.
    #[arg(long, allow_negative_numbers = true)]
    pub theta_hat: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Search for a non-concavity witness at this angle.
    #[arg(long, allow_negative_numbers = true)]
    pub below_branch: Option<f64>,
    /// A witness is the expected outcome; a below-branch `--theta-hat` is
    /// searched instead of rejected.
    #[arg(long)]
    pub expect_failure: bool,
    /// Sample budget of the witness search.
    #[arg(long, default_value_t = 100_000)]
    pub budget: usize,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct SubsolutionArgs {
    #[arg(long, required_unless_present = "snapshot", conflicts_with = "snapshot")]
    pub config: Option<PathBuf>,
    /// Snapshot header (`.json`) or stem.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Branch used for theta_hat with `--snapshot`; defaults to n.
    #[arg(long, allow_negative_numbers = true)]
    pub branch: Option<i64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("DHYM_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&k| k > 0)
        .ok_or_else(|| anyhow::anyhow!("DHYM_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_INVALID);
    }
    let result = match cli.command {
        Command::VerifyConcavity(a) => commands::verify_concavity(&a),
        Command::RunFlow(a) => commands::run_flow(&a),
        Command::CheckSubsolution(a) => commands::check_subsolution(&a),
        Command::CompareFlows(a) => commands::compare_flows(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code_of(&e))
        }
    }
}
