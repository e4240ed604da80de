use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use legal_sbd::eval::BoundaryMode;
use legal_sbd::pipeline::{LanguageFilter, Subset};

mod commands;
mod config;

/// Bad flags, bad config keys and other mistakes in how the tool was invoked.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(
    name = "legal-sbd",
    version,
    about = "Sentence boundary detection for legal text"
)]
struct Cli {
    /// Seed for anything random (corpus splits, synthetic data).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Flat key = value file with defaults for any flag; also read from LEGAL_SBD_CONFIG.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// `jsonl` for `.jsonl`/`.json` files, raw text otherwise.
    Auto,
    Jsonl,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    /// By the report file's extension.
    Auto,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Input {
    /// Input file; standard input when omitted.
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    pub format: InputFormat,
}

#[derive(Debug, Args)]
pub struct Selection {
    /// Split file from `split`; restricts documents to one partition.
    #[arg(long, value_name = "PATH")]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Partition::Test, requires = "split")]
    pub partition: Partition,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print tokens as TSV: doc_id, index, start, end, kind, text.
    Tokenize {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Split a corpus 60/20/20 by document, stratified by language.
    Split {
        #[arg(long, value_name = "PATH")]
        corpus: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Documents, sentences and tokens per language and type, as CSV.
    Stats {
        #[arg(long, value_name = "PATH")]
        corpus: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Sentence length distribution per document type, as CSV.
    Histogram {
        #[arg(long, value_name = "PATH")]
        corpus: PathBuf,
        #[arg(long, default_value_t = 5)]
        bin_size: usize,
        /// Sentences with more tokens than this are counted apart.
        #[arg(long, default_value_t = 101)]
        cutoff: usize,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Train a CRF on the train partition.
    Train(TrainArgs),
    /// Predict sentence spans with a trained model.
    Predict {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        selection: Selection,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Also write per-token labels as TSV.
        #[arg(long, value_name = "PATH")]
        dump_labels: Option<PathBuf>,
    },
    /// Split with the punctuation rule baseline.
    Baseline {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        selection: Selection,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Close a sentence at a colon followed by a line break.
        #[arg(long, num_args = 0..=1, default_value_t = true, default_missing_value = "true", action = ArgAction::Set)]
        colon_rule: bool,
        #[arg(long, default_value_t = 1)]
        min_sentence_chars: usize,
    },
    /// Score predicted spans against gold spans with token-level boundaries.
    Eval {
        #[arg(long, value_name = "PATH")]
        gold: PathBuf,
        /// Predictions as JSONL records with `id` and `spans`.
        #[arg(long, value_name = "PATH")]
        pred: PathBuf,
        #[command(flatten)]
        selection: Selection,
        #[arg(long, default_value_t = BoundaryMode::Both)]
        boundary: BoundaryMode,
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Auto)]
        report_format: ReportFormat,
        /// Score documents without predictions against no spans.
        #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = ArgAction::Set)]
        allow_missing: bool,
    },
    /// Print key-sorted feature maps, one line per token.
    Features {
        #[command(flatten)]
        input: Input,
        /// Text to featurize instead of reading input.
        #[arg(long, conflicts_with = "input")]
        text: Option<String>,
        /// Document id when the input is a corpus; the first document otherwise.
        #[arg(long)]
        doc: Option<String>,
        /// Only this token position.
        #[arg(long)]
        position: Option<usize>,
    },
    /// Time prediction over a corpus.
    Bench {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "PATH")]
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        repeat: usize,
    },
    /// Write a synthetic corpus of simple Spanish-like sentences.
    Generate {
        #[arg(long, default_value_t = 50)]
        documents: usize,
        /// Share of sentences carrying an abbreviation.
        #[arg(long, default_value_t = 0.0)]
        abbreviation_rate: f64,
        #[arg(long, default_value = "syn")]
        id_prefix: String,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
    /// Split file; without one the whole corpus is used.
    #[arg(long, value_name = "PATH")]
    pub split: Option<PathBuf>,
    #[arg(long, default_value_t = Subset::Both)]
    pub subset: Subset,
    /// Comma-separated language codes, or `all`.
    #[arg(long, default_value_t = LanguageFilter::All)]
    pub languages: LanguageFilter,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Per-iteration log as CSV.
    #[arg(long, value_name = "PATH")]
    pub train_log: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub c1: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub c2: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 10)]
    pub lbfgs_memory: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub convergence_tol: f64,
    /// Cut longer documents into pieces at whitespace between sentences.
    #[arg(long)]
    pub max_sequence_length: Option<usize>,
}

fn command() -> clap::Command {
    let mut cmd = Cli::command().args_override_self(true);
    let names: Vec<String> = cmd
        .get_subcommands()
        .map(|s| s.get_name().to_string())
        .collect();
    for name in names {
        cmd = cmd.mut_subcommand(name, |s| s.args_override_self(true));
    }
    cmd
}

fn parse(argv: Vec<OsString>) -> anyhow::Result<Cli> {
    let cmd = command();
    let config_path = config::path_from_args(&argv)
        .map(PathBuf::from)
        .or_else(|| std::env::var_os(config::CONFIG_ENV).map(PathBuf::from));
    let argv = match &config_path {
        Some(p) => config::merge(&cmd, argv, &config::load(p)?)?,
        None => argv,
    };
    let matches = cmd.try_get_matches_from(argv)?;
    Ok(Cli::from_arg_matches(&matches)?)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<legal_sbd::Error>() {
            return if e.is_data_error() { 2 } else { 3 };
        }
        if cause.is::<std::io::Error>()
            || cause.is::<serde_json::Error>()
            || cause.is::<csv::Error>()
        {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match parse(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            if let Some(clap_err) = e.downcast_ref::<clap::Error>() {
                let _ = clap_err.print();
                return match clap_err.kind() {
                    clap::error::ErrorKind::DisplayHelp
                    | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                    _ => ExitCode::from(1),
                };
            }
            eprintln!("error: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match commands::run(cli.command, cli.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&UsageError("x".into()).into()), 1);
        assert_eq!(exit_code(&legal_sbd::Error::EmptyTrainingSet.into()), 2);
        assert_eq!(
            exit_code(&legal_sbd::Error::Diverged("nan".into()).into()),
            3
        );
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(exit_code(&anyhow::Error::from(io).context("reading")), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("unexpected")), 3);
    }

    #[test]
    fn config_values_land_after_the_subcommand() {
        let cmd = command();
        let argv: Vec<OsString> = [
            "legal-sbd",
            "--seed",
            "2",
            "histogram",
            "--corpus",
            "c.jsonl",
            "--cutoff",
            "7",
        ]
        .map(OsString::from)
        .to_vec();
        let entries: Vec<(String, String)> = [("cutoff", "50"), ("seed", "4"), ("bin-size", "3")]
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .to_vec();
        let merged = config::merge(&cmd, argv, &entries).unwrap();
        let cli = Cli::from_arg_matches(&cmd.try_get_matches_from(merged).unwrap()).unwrap();
        match cli.command {
            Command::Histogram {
                cutoff, bin_size, ..
            } => assert_eq!((cutoff, bin_size), (7, 3)),
            other => panic!("{other:?}"),
        }
        assert_eq!(cli.seed, 2);
    }
}
