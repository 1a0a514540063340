//! Command-line surface: ingest, train, cv, eval, attribute, synth, version.
//!
//! The binary is a thin wrapper over [`run`], which is also what the
//! integration tests drive in-process.

pub mod commands;
pub mod config;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// CLI failure with a stable machine-readable kind.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] attriblab::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
        }
    }

    /// Single-line machine-parsable form, emitted on stderr by the binary.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "attriblab",
    version,
    about = "Hierarchical multi-label chest-pathology pipeline with attribution methods"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset manifest and summarize its label distribution.
    Ingest(IngestArgs),
    /// Train one model on the 60% subject split and evaluate on the rest.
    Train(TrainArgs),
    /// K-fold cross-validation plus held-out test evaluation and ensemble.
    Cv(CvArgs),
    /// Evaluate saved models on a manifest, optionally as a soft-vote ensemble.
    Eval(EvalArgs),
    /// Produce attribution maps for one image.
    Attribute(AttributeArgs),
    /// Generate the bundled synthetic hierarchical texture dataset.
    Synth(SynthArgs),
    /// Print the tool version.
    Version,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// JSON run configuration; flags override config keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides config and ATTRIBLAB_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset manifest CSV.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Label hierarchy edge-list file (built-in pathology hierarchy when omitted).
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Where to write the JSON summary (default: summary.json in out-dir or cwd).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Architecture id (plain-cnn, mini-res, mini-inception,
    /// mini-inception-res, mini-dense).
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub input_side: Option<usize>,
    #[arg(long)]
    pub target_side: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Number of folds.
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Model file; repeat for several models.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// Additionally report the soft-vote ensemble of all models.
    #[arg(long)]
    pub ensemble: bool,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Image to explain (PGM or PNG).
    #[arg(long)]
    pub image: PathBuf,
    /// Comma-separated method names, or "all".
    #[arg(long)]
    pub methods: Option<String>,
    /// Comma-separated label names; predicted labels when omitted.
    #[arg(long)]
    pub labels: Option<String>,
    #[arg(long)]
    pub ig_steps: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub fill_value: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of subjects.
    #[arg(long, default_value_t = 100)]
    pub subjects: usize,
    /// Images per subject.
    #[arg(long, default_value_t = 6)]
    pub images_per_subject: usize,
}

/// Parses `argv` and executes the requested command.
pub fn run<I, S>(argv: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    match cli.command {
        Command::Ingest(args) => commands::ingest::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Cv(args) => commands::cv::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Attribute(args) => commands::attribute::run(args),
        Command::Synth(args) => commands::synth::run(args),
        Command::Version => {
            println!("attriblab {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}
