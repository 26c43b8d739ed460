//! `fairshift`: bias-grid audits, theory checks and synthetic data export.
//!
//! Exit codes: 0 on success, 1 on a runtime failure or a failed check,
//! 2 on a usage error.

mod audit;
mod settings;
mod synth;
mod verify;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::CliError;

#[derive(Debug, Parser)]
#[command(name = "fairshift", version, about = "Stress-test fair classifiers under injected data bias")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run classifiers over a bias grid and write results, reports and heatmaps.
    Audit(AuditArgs),
    /// Numerically check the reweighing and fair-Bayes identities.
    Verify(VerifyArgs),
    /// Sample a synthetic train/test pair to CSV.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// `synthetic:desk`, `synthetic:paper`, or a CSV path.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Preprocessing spec for a raw CSV: a file path or a built-in name
    /// (adult, bank, compas, german). Without it the CSV must already hold
    /// numeric features plus `label` and `group` columns.
    #[arg(long)]
    pub spec: Option<String>,
    /// Comma-separated classifier ids.
    #[arg(long)]
    pub classifiers: Option<String>,
    /// Grid preset: desk, full or identity.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated trade-off values for the plug-in and corrected-cost classifiers.
    #[arg(long, allow_hyphen_values = true)]
    pub lambdas: Option<String>,
    #[arg(long)]
    pub beta_pos: Option<String>,
    #[arg(long)]
    pub beta_neg: Option<String>,
    /// Label-flip rates; pass an empty string to skip the label-bias sweep.
    #[arg(long)]
    pub nu: Option<String>,
    /// Plug-in classifiers use the exact posterior of the synthetic model.
    #[arg(long)]
    pub oracle_eta: bool,
    /// Also write SVG figures.
    #[arg(long)]
    pub svg: bool,
    /// Fail when any record is degenerate or cannot be placed in a quadrant.
    #[arg(long)]
    pub strict: bool,
    /// `key = value` file; flags win over its entries.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// sandwich, recovery, symmetry, limits, complexity or thm5.
    #[arg(long)]
    pub check: Option<String>,
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Directory for a manifest and a copy of the JSON lines.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// desk or paper.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = settings::init_threads().and_then(|threads| match cli.command {
        Command::Audit(a) => audit::run(&a, threads),
        Command::Verify(v) => verify::run(&v, threads),
        Command::Synth(s) => synth::run(&s, threads),
    });
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
