mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Language identification with back-off scoring and unsupervised model
/// adaptation.
#[derive(Parser, Debug)]
#[command(name = "heli", version)]
struct Cli {
    /// `key = value` run configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: available cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train models from a labeled corpus
    Train(TrainArgs),
    /// Predict one label per input line
    Identify(IdentifyArgs),
    /// Identify a collection while adapting the models to it
    Adapt(AdaptArgs),
    /// Compare predictions with gold labels
    Evaluate(EvaluateArgs),
    /// Evaluate a parameter grid on development data
    Sweep(SweepArgs),
    /// Accuracy per confidence decile on labeled data
    Calibrate(CalibrateArgs),
    /// Model file utilities
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
}

#[derive(Subcommand, Debug)]
enum ModelCommand {
    /// Print the header and per-kind cardinalities
    Inspect { model: PathBuf },
}

#[derive(Args, Debug, Default)]
struct ModelFlags {
    /// Comma-separated language codes, in tie-break order
    #[arg(long)]
    languages: Option<String>,
    /// Comma-separated schemes, e.g. `orig,lower`
    #[arg(long)]
    schemes: Option<String>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    p_mod: Option<f64>,
    /// Back-off order, e.g. `word:lower+char:lower`
    #[arg(long)]
    backoff: Option<String>,
}

#[derive(Args, Debug, Default)]
struct PlanFlags {
    /// Number of adaptation rounds
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Confidence measure: bs, avg or post
    #[arg(long)]
    measure: Option<String>,
    /// Minimum confidence for a text to update the models, or `none`
    #[arg(long)]
    threshold: Option<String>,
    /// replace or accumulate
    #[arg(long)]
    epoch_mode: Option<String>,
    /// Stop once an epoch leaves every label unchanged
    #[arg(long)]
    stop_at_fixed_point: bool,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    /// One text per line
    #[default]
    Raw,
    /// `text<TAB>label`; labels are ignored
    Labeled,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    #[default]
    Text,
    Tsv,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Labeled training corpus
    #[arg(long)]
    train: Option<PathBuf>,
    /// Where to write the model file
    #[arg(long)]
    model: Option<PathBuf>,
    /// Ignore training lines with this label (repeatable)
    #[arg(long)]
    drop_label: Vec<String>,
    #[command(flatten)]
    model_flags: ModelFlags,
}

#[derive(Args, Debug)]
struct IdentifyArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Texts to identify (default: stdin)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Predictions (default: stdout)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write per-language scores and confidence as TSV
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Confidence measure for the scores file
    #[arg(long, default_value = "bs")]
    confidence: String,
    #[arg(long, value_enum, default_value_t)]
    input_format: InputFormat,
}

#[derive(Args, Debug)]
struct AdaptArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    input_format: InputFormat,
    /// Round log of the last epoch: round, index, confidence, label
    #[arg(long)]
    emit_rounds: Option<PathBuf>,
    /// Write the adapted models here
    #[arg(long)]
    save_model: Option<PathBuf>,
    #[command(flatten)]
    plan: PlanFlags,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Labeled gold corpus
    #[arg(long)]
    gold: PathBuf,
    /// One predicted label per line
    #[arg(long)]
    predictions: PathBuf,
    /// Ignore lines whose gold label is this (repeatable)
    #[arg(long)]
    drop_label: Vec<String>,
    #[arg(long, value_enum, default_value_t)]
    format: ReportFormat,
    /// macro or weighted
    #[arg(long, default_value = "macro")]
    objective: String,
    /// Exit with status 3 if the objective is below this value
    #[arg(long)]
    assert_min: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    /// Labeled development corpus
    #[arg(long, conflicts_with = "dev_tail")]
    dev: Option<PathBuf>,
    /// Use the last N training lines of every language as development data
    #[arg(long)]
    dev_tail: Option<usize>,
    /// Grid file with comma-separated values per axis
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Write the full table here instead of stdout
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value = "macro")]
    objective: String,
    /// Ignore training and development lines with this label (repeatable)
    #[arg(long)]
    drop_label: Vec<String>,
    #[arg(long)]
    languages: Option<String>,
    #[arg(long)]
    schemes: Option<String>,
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    epoch_mode: Option<String>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Labeled corpus to identify
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: ReportFormat,
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Assertion(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Assertion(_) => 3,
        }
    }
}

impl From<heli_core::Error> for Failure {
    fn from(e: heli_core::Error) -> Self {
        if e.is_config() {
            Failure::Usage(e.into())
        } else {
            Failure::Data(e.into())
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Usage(e) | Failure::Data(e) => eprintln!("heli: {e:#}"),
                Failure::Assertion(msg) => eprintln!("heli: {msg}"),
            }
            ExitCode::from(failure.code())
        }
    }
}
