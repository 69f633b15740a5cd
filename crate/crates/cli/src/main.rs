mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Grouped panel regressions: K-means estimation of latent slope groups,
/// information-criterion selection of the number of groups, and the
/// Monte Carlo designs used to study them.
#[derive(Debug, Parser)]
#[command(name = "grouppanel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate group memberships and slopes at a fixed number of groups.
    Fit(FitArgs),
    /// Choose the number of groups with an information criterion.
    Select(SelectArgs),
    /// Run Monte Carlo scenarios from a config file.
    Simulate(SimulateArgs),
    /// Write the within-transformed panel.
    Demean(DemeanArgs),
    /// Write one simulated panel and its true memberships.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Long-format panel CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Unit id column [default: unit].
    #[arg(long)]
    pub unit: Option<String>,
    /// Period column [default: period].
    #[arg(long)]
    pub period: Option<String>,
    /// Outcome column [default: y].
    #[arg(long)]
    pub outcome: Option<String>,
    /// Regressor columns, comma separated [default: every other column].
    #[arg(long, value_delimiter = ',')]
    pub regressors: Option<Vec<String>>,
    /// Subtract unit time means before estimation.
    #[arg(long)]
    pub within: bool,
}

#[derive(Debug, Args)]
pub struct EstimationArgs {
    /// Add group-specific time effects.
    #[arg(long)]
    pub gfe: bool,
    /// Random initial groupings per K [default: 1000].
    #[arg(long)]
    pub starts: Option<usize>,
    /// Base seed.
    #[arg(long, env = "GROUPPANEL_SEED")]
    pub seed: Option<u64>,
    /// Iteration cap per start [default: 1000].
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub est: EstimationArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of groups.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub est: EstimationArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Smallest K considered [default: 2].
    #[arg(long)]
    pub kmin: Option<usize>,
    /// Largest K considered.
    #[arg(long)]
    pub kmax: Option<usize>,
    /// bn, bic, mic1, mic2 or custom:<h> [default: mic1].
    #[arg(long)]
    pub penalty: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Replications per scenario cell [default: 100].
    #[arg(long)]
    pub reps: Option<usize>,
    /// Random initial groupings per K [default: 1000].
    #[arg(long)]
    pub starts: Option<usize>,
    /// Base seed.
    #[arg(long, env = "GROUPPANEL_SEED")]
    pub seed: Option<u64>,
    /// Iteration cap per start [default: 1000].
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DemeanArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// dgp1 (static), dgp2 (dynamic) or dgp3 (time effects).
    #[arg(long)]
    pub dgp: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub t: usize,
    /// Small-group exponent.
    #[arg(long)]
    pub alpha: f64,
    /// Seed of the simulated draw.
    #[arg(long, env = "GROUPPANEL_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Zero the idiosyncratic errors.
    #[arg(long)]
    pub noiseless: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Select(a) => commands::select(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Demean(a) => commands::demean(a),
        Command::Generate(a) => commands::generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", commands::error_json(&err));
            ExitCode::FAILURE
        }
    }
}
