mod commands;
mod config;
mod failure;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use kgat::augment::{Strategy, DEFAULT_K, DEFAULT_P, DEFAULT_PIVOT};
use kgat::harness::HeadType;

use crate::config::ModelKind;

/// Knowledge-guided attention for sentence-pair matching.
#[derive(Debug, Parser)]
#[command(name = "kgat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Head {
    Classifier,
    Regressor,
}

impl From<Head> for HeadType {
    fn from(h: Head) -> HeadType {
        match h {
            Head::Classifier => HeadType::BinaryClassifier,
            Head::Regressor => HeadType::Regressor,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Precompute similarity matrices for every pair of a TSV file
    BuildSim(BuildSimArgs),
    /// Train a model and write model.ckpt and history.json
    Train(TrainArgs),
    /// Print metrics of a checkpoint on a TSV file as JSON
    Eval(EvalArgs),
    /// Write the dataset followed by one augmented copy of every pair
    Augment(AugmentArgs),
    /// Fit a linear head on each layer of a frozen encoder
    ProbeLayers(ProbeArgs),
    /// Train over data fractions and seeds and summarize held-out metrics
    LearningCurve(CurveArgs),
    /// Export the similarity matrix of one sentence pair as CSV and PGM
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
struct BuildSimArgs {
    #[arg(long, env = "KGAT_WORDNET_DIR")]
    wordnet: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Store full attention-sized matrices for the encoder instead of
    /// cross-sentence matrices for ESIM
    #[arg(long)]
    full: bool,
    /// Sequence length of full matrices; must match the encoder's max_len
    #[arg(long, default_value_t = 128, requires = "full")]
    max_len: usize,
    #[arg(long, value_enum, default_value_t = Head::Classifier)]
    head: Head,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    #[arg(long)]
    config: PathBuf,
    /// Training TSV; defaults to the config's data.train
    #[arg(long)]
    data: Option<PathBuf>,
    /// Multiply attention by precomputed similarity matrices
    #[arg(long)]
    guided: bool,
    /// Similarity cache built on the training TSV
    #[arg(long)]
    sim: Option<PathBuf>,
    /// Share of training pairs used; overrides the config
    #[arg(long)]
    fraction: Option<f64>,
    /// Seed for initialization, sampling and dropout; overrides the config
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's output_dir, then "."
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint file
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Similarity cache built on the evaluation TSV
    #[arg(long)]
    sim: Option<PathBuf>,
    /// Computes similarity matrices when --sim is absent
    #[arg(long, env = "KGAT_WORDNET_DIR")]
    wordnet: Option<PathBuf>,
    /// Rebuild the model from this run config and load the checkpoint's tensors into it
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long)]
    strategy: Strategy,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Needed by replace_synonyms
    #[arg(long, env = "KGAT_WORDNET_DIR")]
    wordnet: Option<PathBuf>,
    /// Number of lowest-TF-IDF words considered for deletion
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Deletion probability of each considered word
    #[arg(long, default_value_t = DEFAULT_P)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pivot language of back translation
    #[arg(long, default_value = DEFAULT_PIVOT)]
    pivot: String,
    /// POST {text, source, target} -> {text}; without it back translation is the identity
    #[arg(long)]
    translate_endpoint: Option<String>,
    #[arg(long, value_enum, default_value_t = Head::Classifier)]
    head: Head,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    /// Encoder checkpoint
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Needed for guided checkpoints
    #[arg(long, env = "KGAT_WORDNET_DIR")]
    wordnet: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    learning_rate: f64,
    /// Share of pairs held out for evaluation
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct CurveArgs {
    #[arg(long)]
    config: PathBuf,
    /// Cells trained in parallel
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write PREFIX.json and PREFIX.csv; defaults to the config's output_dir/curve
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct HeatmapArgs {
    #[arg(long, env = "KGAT_WORDNET_DIR")]
    wordnet: PathBuf,
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    /// Writes PREFIX.csv and PREFIX.pgm
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let outcome = match cli.command {
        Command::BuildSim(a) => commands::build_sim(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Augment(a) => commands::augment(a),
        Command::ProbeLayers(a) => commands::probe(a),
        Command::LearningCurve(a) => commands::learning_curve(a),
        Command::Heatmap(a) => commands::heatmap(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("kgat: {f}");
            f.exit_code()
        }
    }
}
