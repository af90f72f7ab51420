//! Command-line runner for the verification scenarios.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use codelength::error::Error;
use codelength::experiment::{run_and_write, ConfigFile, ExperimentConfig, Scenario, Summary};

#[derive(Parser)]
#[command(name = "codelength", version, about = "Codelength and risk-bound verification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Truncated Kraft sums of the lattice codes.
    KraftAudit(Common),
    /// Graphical-lasso risk against the redundancy bound.
    GgmRisk(Common),
    /// Per-trial check of the risk-validity inequality for the lattice penalty.
    RiskValidity(Common),
    /// Conditional ℓ0 code: Kraft, Riemann and codelength checks.
    SubsetAudit(Common),
    /// Best-subset regression risk against its bound.
    RegressionRisk(Common),
    /// Gaussian divergences on random precision pairs.
    Divergence(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of replicates.
    #[arg(long)]
    reps: Option<usize>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

impl Command {
    fn split(self) -> (Scenario, Common) {
        match self {
            Command::KraftAudit(c) => (Scenario::KraftAudit, c),
            Command::GgmRisk(c) => (Scenario::GgmRisk, c),
            Command::RiskValidity(c) => (Scenario::RiskValidity, c),
            Command::SubsetAudit(c) => (Scenario::SubsetCodeAudit, c),
            Command::RegressionRisk(c) => (Scenario::RegressionRisk, c),
            Command::Divergence(c) => (Scenario::DivergenceTable, c),
        }
    }
}

fn load(scenario: Scenario, args: &Common) -> Result<ExperimentConfig, Error> {
    let mut file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if args.seed.is_some() {
        file.seed = args.seed;
    }
    if args.reps.is_some() {
        file.reps = args.reps;
    }
    if args.out.is_some() {
        file.out_dir = args.out.clone();
    }
    ExperimentConfig::resolve(file, Some(scenario))
}

fn report(summary: &Summary) {
    println!("scenario {}  trials {}  config {}", summary.scenario, summary.trials, summary.config_hash);
    for c in &summary.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        let kind = if c.hard { "hard" } else { "soft" };
        println!("  {status} [{kind}] {}: {}", c.name, c.detail);
    }
    println!("  wall time {:.2} s", summary.wall_time_seconds);
}

fn main() -> ExitCode {
    let (scenario, args) = Cli::parse().command.split();
    let config = match load(scenario, &args) {
        Ok(c) => c,
        Err(Error::Config(errors)) => {
            eprintln!("invalid configuration:");
            for e in errors {
                eprintln!("  {e}");
            }
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_and_write(&config) {
        Ok(summary) => {
            if !args.quiet {
                report(&summary);
            }
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
