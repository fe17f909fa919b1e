//! `srl`: synthetic corpora, training, evaluation, ensembling and analysis
//! for subword-unit semantic role labelers.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use srl_core::corpus::ColumnMode;
use srl_core::subword::Rho;

/// Exit status for a successful run.
pub const EXIT_OK: u8 = 0;
/// Bad flags, bad config values, missing required inputs for a mode.
pub const EXIT_USAGE: u8 = 1;
/// Unreadable or malformed data, incompatible artifacts.
pub const EXIT_DATA: u8 = 2;
/// Non-finite values or divergence during training.
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "srl", version, about = "Subword-unit semantic role labeling toolkit")]
#[command(after_help = "Log verbosity is read from the SRL_LOG environment variable (error, warn, info, debug).")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic train/dev/test corpus.
    Synth(SynthArgs),
    /// Corpus statistics: role inventory, OOV rate, ambiguity ratio.
    Stats(StatsArgs),
    /// Train a labeler; writes checkpoint, log and run config.
    Train(TrainArgs),
    /// Score a checkpoint on a test corpus.
    Eval(EvalArgs),
    /// Combine distribution dumps by averaging or stacking.
    Ensemble(EnsembleArgs),
    /// Bucketed diagnostics over predictions.
    Analyze(AnalyzeArgs),
    /// Relative improvement tables from saved reports.
    Compare(CompareArgs),
    /// Learning curve over growing training prefixes, with a log fit.
    Curve(CurveArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Generator spec (TOML). Defaults are used for missing keys.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Corpus to describe.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Training corpus for the OOV rate.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Roles seen fewer times are listed as infrequent.
    #[arg(long, default_value_t = 10)]
    pub min_count: usize,
}

/// Model and training overrides shared by `train` and `curve`.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// TOML file with `[model]` and `[train]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Unit type: word, char, char3 or morph.
    #[arg(long)]
    pub rho: Option<Rho>,
    /// LEMMA/FEAT columns to read: gold or predicted.
    #[arg(long)]
    pub column_mode: Option<ColumnMode>,
    #[arg(long)]
    pub embedding_size: Option<usize>,
    #[arg(long)]
    pub hidden_size: Option<usize>,
    /// Stacked bi-LSTM layers in the labeler.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub flag_size: Option<usize>,
    #[arg(long)]
    pub min_freq: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub lr_halving_patience: Option<usize>,
    #[arg(long)]
    pub early_stop_patience: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Sets both the initialization and the shuffling seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a saved training state. Only `--max-epochs` may
    /// change on resume; other settings come from the state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Model checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Test corpus (in- or out-of-domain).
    #[arg(long)]
    pub test: PathBuf,
    /// Read the other LEMMA/FEAT columns than the model was trained on.
    #[arg(long)]
    pub column_mode: Option<ColumnMode>,
    /// Key-value report output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-frame label distributions for `ensemble`.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Test corpus with predicted role columns.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnsembleMode {
    Avg,
    Sg,
}

#[derive(Args, Debug)]
pub struct EnsembleArgs {
    #[arg(long, value_enum)]
    pub mode: EnsembleMode,
    /// Member dumps over the test corpus.
    #[arg(long, num_args = 1.., required = true)]
    pub dumps: Vec<PathBuf>,
    /// Gold test corpus.
    #[arg(long)]
    pub test: PathBuf,
    /// Member dumps over the combiner training corpus, in `--dumps` order (sg).
    #[arg(long, num_args = 1..)]
    pub dev_dumps: Vec<PathBuf>,
    /// Gold combiner training corpus (sg).
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.02)]
    pub stacker_lr: f64,
    #[arg(long, default_value_t = 25)]
    pub stacker_epochs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Analysis {
    Ambiguity,
    Derivation,
    Distance,
    Features,
    Targeted,
    Complexity,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Tsv,
    Csv,
}

/// `NAME=PATH`, or a bare path named after its file stem.
#[derive(Clone, Debug)]
pub struct Named {
    pub name: String,
    pub path: PathBuf,
}

impl std::str::FromStr for Named {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once('=') {
            Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok(Named {
                name: n.into(),
                path: p.into(),
            }),
            Some(_) => Err(format!("expected NAME=PATH, got `{}`", s)),
            None => {
                let path = PathBuf::from(s);
                let name = path
                    .file_stem()
                    .map(|x| x.to_string_lossy().into_owned())
                    .ok_or_else(|| format!("cannot name `{}`", s))?;
                Ok(Named { name, path })
            }
        }
    }
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Analysis to run.
    #[arg(long, value_enum)]
    pub name: Analysis,
    /// Gold corpus the predictions were made on.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Predicted corpora as NAME=PATH; repeatable.
    #[arg(long = "pred")]
    pub predictions: Vec<Named>,
    /// Training corpus (ambiguity, complexity).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Bins such as `0-4,5-9` (distance, features).
    #[arg(long)]
    pub bins: Option<String>,
    /// Leave forms unseen in training out of the ambiguity buckets.
    #[arg(long)]
    pub exclude_unseen: bool,
    /// Feature marking a derivation boundary.
    #[arg(long, default_value = "DB")]
    pub marker: String,
    /// Buckets with fewer gold arguments get blank scores.
    #[arg(long, default_value_t = 0)]
    pub min_support: usize,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Member reports as NAME=PATH. `word`, `morph` and names starting
    /// with `char` take part in the relative metrics.
    #[arg(long = "report", required = true)]
    pub reports: Vec<Named>,
    /// Ensemble reports as NAME=PATH.
    #[arg(long = "ensemble")]
    pub ensembles: Vec<Named>,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CurveArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long)]
    pub train: PathBuf,
    /// Model selection corpus.
    #[arg(long)]
    pub dev: PathBuf,
    /// Scoring corpus.
    #[arg(long)]
    pub test: PathBuf,
    /// Training sentences added per point.
    #[arg(long)]
    pub chunk: usize,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Problems with how the tool was invoked, reported with exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<srl_core::Error>() {
            return if e.is_numeric() {
                EXIT_NUMERIC
            } else if matches!(e, srl_core::Error::Config(_)) {
                EXIT_USAGE
            } else {
                EXIT_DATA
            };
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SRL_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::from(EXIT_OK),
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(exit_code(&e))
        }
    }
}
