//! `acrokit` command-line front-end.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid input data, 3 runtime or
//! numeric failure. Failures print one JSON record on stderr.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use acrokit::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
    Lib(acrokit::Error),
}

impl From<acrokit::Error> for CliError {
    fn from(e: acrokit::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Lib(e) => match e.kind() {
                ErrorKind::Data => 2,
                ErrorKind::Runtime => 3,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self.code() {
            1 => "usage",
            2 => "data",
            _ => "runtime",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => m.clone(),
            CliError::Lib(e) => e.to_string(),
        }
    }

    fn report(&self) {
        let record = serde_json::json!({ "error": self.kind(), "code": self.code(), "message": self.message() });
        eprintln!("{record}");
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "acrokit",
    version,
    about = "Acronym identification and disambiguation pipelines"
)]
pub struct Cli {
    /// Seed for every randomized stage; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with hyperparameters.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tag short and long forms with the rule-based matcher.
    ExtractRules(ExtractRulesArgs),
    /// Build an auxiliary identification corpus by distant supervision.
    BuildAuxai(BuildAuxaiArgs),
    /// Build an auxiliary disambiguation corpus by label propagation.
    BuildAuxad(BuildAuxadArgs),
    /// Collapse duplicate disambiguation examples and audit train/eval overlap.
    Dedupe(DedupeArgs),
    /// Train a BIO tagger.
    TrainTagger(TrainTaggerArgs),
    /// Tag sentences with one tagger or an ensemble.
    Tag(TagArgs),
    /// Train the twin sentence encoder on same/different-sense pairs.
    TrainTwin(TrainTwinArgs),
    /// Write sentence embeddings for disambiguation examples.
    Embed(EmbedArgs),
    /// Build a retrieval index from labeled examples and their embeddings.
    BuildIndex(BuildIndexArgs),
    /// Predict long forms for disambiguation examples.
    Disambiguate(DisambiguateArgs),
    /// Score identification predictions.
    EvaluateAi(EvaluateAiArgs),
    /// Score disambiguation predictions.
    EvaluateAd(EvaluateAdArgs),
    /// Render evaluation reports as text tables.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct ExtractRulesArgs {
    /// Identification file; existing labels are ignored.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BuildAuxaiArgs {
    #[arg(long)]
    pub docs: PathBuf,
    /// Term table: {"pairs": [[short, long], ...]}.
    #[arg(long)]
    pub terms: PathBuf,
    /// Labeled identification data used to mine universal acronyms.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub term_ratio: Option<f64>,
    #[arg(long)]
    pub min_universal: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BuildAuxadArgs {
    #[arg(long)]
    pub docs: PathBuf,
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DedupeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overlap statistics record.
    #[arg(long)]
    pub report: PathBuf,
    /// Evaluation split to audit against the training input.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Evaluation examples without a training duplicate.
    #[arg(long, requires = "eval")]
    pub eval_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TokenEmbeddingArgs {
    /// Per-token vectors produced by an external encoder.
    #[arg(long)]
    pub token_embeddings: Option<PathBuf>,
    #[arg(long, default_value = "file", requires = "token_embeddings")]
    pub encoder_name: String,
}

#[derive(Args, Debug)]
pub struct TrainTaggerArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Warm-start from a previously trained model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Loss curve output (JSON array).
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[command(flatten)]
    pub tokens: TokenEmbeddingArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub o_weight: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TagArgs {
    /// Model file; repeat to average an ensemble.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tokens: TokenEmbeddingArgs,
}

#[derive(Args, Debug)]
pub struct WordVectorArgs {
    /// Word vectors, one {"word", "vector"} record per line.
    #[arg(long)]
    pub vectors: PathBuf,
    /// Unigram probabilities, one {"word", "p"} record per line.
    #[arg(long)]
    pub freqs: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainTwinArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[command(flatten)]
    pub words: WordVectorArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub output_dim: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EmbedMethod {
    Sif,
    Twin,
    Mean,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long, value_enum)]
    pub method: EmbedMethod,
    /// Examples to embed; repeat to embed splits jointly into one file.
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub words: WordVectorArgs,
    /// Twin model file.
    #[arg(long, required_if_eq("method", "twin"))]
    pub model: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BuildIndexArgs {
    /// Labeled examples; repeat to merge splits (e.g. train and dev).
    #[arg(long = "train", required = true)]
    pub train: Vec<PathBuf>,
    /// Auxiliary labeled examples, off unless given.
    #[arg(long)]
    pub aux: Vec<PathBuf>,
    /// Ensemble member embeddings as NAME=PATH or PATH; repeat per member.
    #[arg(long = "embeddings", required = true)]
    pub embeddings: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DisambiguationMethod {
    NearestNeighbor,
    MostFrequent,
}

#[derive(Args, Debug)]
pub struct DisambiguateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "nearest-neighbor")]
    pub method: DisambiguationMethod,
    /// Index files; several are merged in order.
    #[arg(long = "index", required_if_eq("method", "nearest-neighbor"))]
    pub index: Vec<PathBuf>,
    /// Query embeddings as NAME=PATH or PATH, one per index member.
    #[arg(long = "embeddings")]
    pub embeddings: Vec<String>,
    /// Labeled examples providing counts for the most-frequent baseline.
    #[arg(long = "train", required_if_eq("method", "most-frequent"))]
    pub train: Vec<PathBuf>,
    /// Abstain on nearest-neighbor predictions scoring below this value.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EvaluateAiArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateAdArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Treat gold examples without a prediction as abstentions.
    #[arg(long)]
    pub allow_abstain: bool,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Comma-separated score thresholds for the precision/recall sweep.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub thresholds: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Also write the rendered tables to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return Err(CliError::Usage(
                first.trim_start_matches("error: ").to_string(),
            ));
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let config = config::RunConfig::load(cli.config.as_deref())?.with_seed(cli.seed);
    commands::dispatch(cli.command, config)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::from(e.code())
        }
    }
}
