mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Probe language-model layers for subject-verb agreement errors.
#[derive(Debug, Parser)]
#[command(name = "gedprobe", version, about)]
pub struct Cli {
    /// Base directory for relative paths.
    #[arg(long, env = "GEDPROBE_WORKSPACE", global = true)]
    pub workspace: Option<PathBuf>,

    /// Overwrite existing outputs instead of skipping.
    #[arg(long, global = true)]
    pub force: bool,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert minimal-pair stimuli into token-labelled sentences.
    ConvertStimuli(ConvertStimuliArgs),
    /// Selectively correct an M2 file, keeping sentences with target errors.
    ProcessCorpus(ProcessCorpusArgs),
    /// Split off a dev set and draw seeded training samples.
    Sample(SampleArgs),
    /// Run the external extractor and validate the store it writes.
    Extract(ExtractArgs),
    /// Write a synthetic embedding store for a corpus.
    Synthesize(SynthesizeArgs),
    /// Train one probe on one layer.
    Train(TrainArgs),
    /// Score predictions, a probe, or the verb-only baseline.
    Evaluate(EvaluateArgs),
    /// Layer sweep over models and training sources.
    Exp1(ExperimentArgs),
    /// Verb-holdout comparison over training-set sizes.
    Exp2(ExperimentArgs),
    /// Corpus or stimuli statistics.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct ConvertStimuliArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// jsonl (pickle export) or paired-text.
    #[arg(long, default_value = "jsonl")]
    pub format: String,
    /// Extra verb forms counted as verb positions (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = gedprobe::stimuli::DEFAULT_VERB_SUPPLEMENT.iter().map(|s| s.to_string()))]
    pub supplement: Vec<String>,
    /// Also write the verb inventory as JSON.
    #[arg(long)]
    pub inventory: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProcessCorpusArgs {
    #[arg(long)]
    pub m2: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Error types left uncorrected.
    #[arg(long = "target", value_delimiter = ',', default_value = gedprobe::SVA_TAG)]
    pub targets: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub annotator: u32,
    /// Prefix for sentence ids; defaults to the file stem.
    #[arg(long)]
    pub id_prefix: Option<String>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 1936)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Split off a dev set of this many sentences before sampling.
    #[arg(long)]
    pub dev_size: Option<usize>,
    #[arg(long, default_value_t = 1_000_003)]
    pub dev_seed: u64,
    /// Drop sentences containing these verbs (whitespace separated file).
    #[arg(long)]
    pub holdout_verbs: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = gedprobe::corpus::BE_FORMS.iter().map(|s| s.to_string()))]
    pub exceptions: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub include_embedding_layer: bool,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Extractor command; arguments are appended.
    #[arg(long, env = "GEDPROBE_EXTRACTOR", default_value = "gedprobe-extract")]
    pub extractor: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SignalKind {
    Separable,
    Random,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub dim: u16,
    #[arg(long, default_value_t = 12)]
    pub layers: u16,
    #[arg(long, value_enum, default_value_t = SignalKind::Separable)]
    pub signal: SignalKind,
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StopOn {
    DevF1,
    DevLoss,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub train_store: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub dev_store: PathBuf,
    #[arg(long)]
    pub layer: u16,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON training config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long, value_enum)]
    pub stop_on: Option<StopOn>,
    /// Write the per-epoch trace as JSON.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gold: PathBuf,
    /// Predictions in corpus format; any non-OK label counts as an error.
    #[arg(long, conflicts_with_all = ["probe", "baseline"])]
    pub pred: Option<PathBuf>,
    #[arg(long, requires = "store", conflicts_with = "baseline")]
    pub probe: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Score the verb-only baseline.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StatsFormat {
    Markdown,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Row label; defaults to the file stem.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, value_enum, default_value_t = StatsFormat::Markdown)]
    pub format: StatsFormat,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|c| c.downcast_ref::<gedprobe::Error>()) {
        Some(e) if e.is_integrity() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
