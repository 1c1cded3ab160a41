mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sirank::losses::LossKind;
use sirank::scoring::ModelMode;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(name = "sirank", version, about = "Scale-invariant learning-to-rank experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset (JSON Lines) and its schema.
    Generate(GenerateArgs),
    /// Train one model and save a checkpoint.
    Train(TrainArgs),
    /// Mean NDCG of a checkpoint on a dataset, optionally under perturbations.
    Evaluate(EvaluateArgs),
    /// Rescale the scale-variant features of a dataset.
    Perturb(PerturbArgs),
    /// Train every loss and model mode, then write JSON, CSV and text reports.
    Experiment(ExperimentArgs),
    /// Re-render a JSON experiment report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GeneratorOverrides {
    /// Generator config as JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    queries: Option<usize>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    generator: GeneratorOverrides,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Dataset output path.
    #[arg(long)]
    out: PathBuf,
    /// Schema output path.
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Debug, Args)]
struct Hyper {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// SoftRank score noise.
    #[arg(long)]
    sigma: Option<f64>,
    /// Hidden widths of the deep stack, comma separated.
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    /// Output width of the query compressor.
    #[arg(long = "L")]
    compressor_dim: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    loss: LossKind,
    #[arg(long, default_value = "sir")]
    mode: ModelMode,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Perturbation cases to evaluate as well, e.g. 1,2,3,4.
    #[arg(long, value_delimiter = ',')]
    cases: Vec<u8>,
    /// JSON result path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    #[arg(long)]
    case: u8,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Generate the dataset instead of reading `--schema` and `--data`.
    #[arg(long, conflicts_with_all = ["schema", "data"])]
    generate: bool,
    #[arg(long, required_unless_present = "generate", requires = "data")]
    schema: Option<PathBuf>,
    #[arg(long, required_unless_present = "generate", requires = "schema")]
    data: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorOverrides,
    /// Experiment config as JSON; flags override its fields.
    #[arg(long = "experiment-config")]
    experiment_config: Option<PathBuf>,
    /// Output directory for report.json, report.csv and report.txt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Losses to train, comma separated.
    #[arg(long, value_delimiter = ',')]
    loss: Option<Vec<LossKind>>,
    /// Model modes to train, comma separated.
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<ModelMode>>,
    /// Perturbation cases, comma separated.
    #[arg(long = "case", value_delimiter = ',')]
    cases: Option<Vec<u8>>,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum ReportFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// JSON report written by `experiment`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Perturb(a) => commands::perturb(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sirank: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
