//! Command-line front end. All real work lives in `usm_knn::cli`; this file
//! only translates flags into a `RunConfig` and maps errors to exit codes.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use usm_knn::cli::{self, CommandKind, DatasetSpec, FoldSpec, RunConfig};
use usm_knn::compressor::{CompressorConfig, Scheme};
use usm_knn::dataset::{HeaderLabelRule, LabelRule};
use usm_knn::error::{Error, Result};
use usm_knn::evaluate::{FeatureConfig, MethodConfig};
use usm_knn::metric::PairCachePolicy;

/// Classify byte sequences by compression distance, evaluate the forecasts.
#[derive(Parser)]
#[command(name = "usmknn", version, about)]
struct Cli {
    /// Print progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the pairwise distance matrix of a corpus and persist it
    /// together with the complexity cache.
    Matrix(MatrixArgs),
    /// Cross-validate a method over a corpus; write per-example predictions
    /// and a metrics report.
    Cv(CvArgs),
    /// Bin a predictions file into a reliability curve (CSV and SVG plot).
    Erc(ErcArgs),
    /// Recompute all metrics from a predictions file and print them.
    Report(ReportArgs),
    /// Run a command described by a JSON config file instead of flags.
    Run(RunArgs),
}

#[derive(Args)]
#[group(multiple = false)]
struct DatasetArgs {
    /// Directory tree: one subdirectory per fold, one file per sequence,
    /// labels from filename prefixes.
    #[arg(long, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// FASTA file with the label in a header token.
    #[arg(long, value_name = "FILE")]
    fasta: Option<PathBuf>,
    /// Tab-separated file with id, label, payload columns.
    #[arg(long, value_name = "FILE")]
    tsv: Option<PathBuf>,
}

#[derive(Args)]
struct LabelArgs {
    /// Filename prefix mapped to a label, as `PREFIX=LABEL`; repeatable,
    /// tried in order. Default: `spmsg=spam`.
    #[arg(long = "label-prefix", value_name = "PREFIX=LABEL")]
    label_prefixes: Vec<String>,
    /// Label for filenames matching no prefix. Default: `legit`.
    #[arg(long, value_name = "LABEL")]
    label_fallback: Option<String>,
    /// Whitespace-separated FASTA header token holding the label.
    #[arg(long, value_name = "N", default_value_t = 1)]
    fasta_label_token: usize,
}

impl LabelArgs {
    fn file_rule(&self) -> Result<LabelRule> {
        let mut rule = LabelRule::default();
        if !self.label_prefixes.is_empty() {
            let mut prefixes = Vec::new();
            for spec in &self.label_prefixes {
                let (prefix, label) = spec.split_once('=').ok_or_else(|| {
                    Error::Config(format!("label prefix `{spec}` is not PREFIX=LABEL"))
                })?;
                prefixes.push((prefix.to_string(), label.to_string()));
            }
            rule.prefixes = prefixes;
        }
        if let Some(fallback) = &self.label_fallback {
            rule.fallback = Some(fallback.clone());
        }
        Ok(rule)
    }
}

fn dataset_spec(data: &DatasetArgs, labels: &LabelArgs) -> Result<DatasetSpec> {
    match (&data.data_dir, &data.fasta, &data.tsv) {
        (Some(path), None, None) => Ok(DatasetSpec::LabeledDirs {
            path: path.clone(),
            labels: labels.file_rule()?,
        }),
        (None, Some(path), None) => Ok(DatasetSpec::Fasta {
            path: path.clone(),
            labels: HeaderLabelRule {
                token: labels.fasta_label_token,
            },
        }),
        (None, None, Some(path)) => Ok(DatasetSpec::Delimited { path: path.clone() }),
        _ => Err(Error::Config(
            "pass exactly one of --data-dir, --fasta, --tsv".into(),
        )),
    }
}

#[derive(Args)]
struct CompressorArgs {
    /// DEFLATE effort level, 1..=9.
    #[arg(long, default_value_t = 9)]
    level: u32,
    /// Pair-entry caching while building matrices.
    #[arg(long, value_enum, default_value_t = PairCacheArg::Auto)]
    pair_cache: PairCacheArg,
    /// Compute pairwise distances on a single thread.
    #[arg(long)]
    no_parallel: bool,
}

impl CompressorArgs {
    fn config(&self) -> Result<CompressorConfig> {
        CompressorConfig::new(Scheme::DeflateRaw, self.level)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PairCacheArg {
    Auto,
    On,
    Off,
}

impl From<PairCacheArg> for PairCachePolicy {
    fn from(arg: PairCacheArg) -> Self {
        match arg {
            PairCacheArg::Auto => PairCachePolicy::Auto,
            PairCacheArg::On => PairCachePolicy::On,
            PairCacheArg::Off => PairCachePolicy::Off,
        }
    }
}

#[derive(Args)]
struct MatrixArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    labels: LabelArgs,
    #[command(flatten)]
    compressor: CompressorArgs,
    /// Output directory for matrix.csv and complexities.tsv.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    UsmKnn,
    FreqKnn,
    NaiveBayes,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureArg {
    /// Counts of the twenty amino-acid letters.
    AminoChars,
    /// Counts over a vocabulary of frequent lowercased tokens.
    Tokens,
}

#[derive(Clone, Copy, ValueEnum)]
enum FoldStrategyArg {
    Predefined,
    Stratified,
    Random,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    labels: LabelArgs,
    #[command(flatten)]
    compressor: CompressorArgs,
    /// Learner to cross-validate.
    #[arg(long, value_enum, default_value_t = MethodArg::UsmKnn)]
    method: MethodArg,
    /// Neighbours consulted per query (K-NN methods).
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    /// Laplace smoothing of the neighbour vote (K-NN methods).
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Laplace smoothing of feature counts (naive-bayes).
    #[arg(long, default_value_t = 1.0)]
    smoothing: f64,
    /// Feature space for freq-knn and naive-bayes.
    #[arg(long, value_enum, default_value_t = FeatureArg::Tokens)]
    features: FeatureArg,
    /// Vocabulary size for token features.
    #[arg(long, default_value_t = 500)]
    max_terms: usize,
    /// Rebuild the complexity cache from scratch inside every fold instead
    /// of sharing the global distance matrix (slow; audit mode).
    #[arg(long)]
    strict_per_fold: bool,
    /// How to assign cross-validation folds.
    #[arg(long, value_enum, default_value_t = FoldStrategyArg::Stratified)]
    fold_strategy: FoldStrategyArg,
    /// Number of folds (stratified and random strategies).
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Seed for every random choice in the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reuse a distance matrix written by the matrix command.
    #[arg(long, value_name = "FILE")]
    matrix: Option<PathBuf>,
    /// Reliability-curve bin count recorded in the report.
    #[arg(long, default_value_t = 10)]
    erc_bins: usize,
    /// Floor applied to forecast probabilities before taking logs.
    #[arg(long, default_value_t = 1e-10)]
    log_loss_floor: f64,
    /// Output directory for predictions.csv and report.json.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

impl CvArgs {
    fn feature_config(&self) -> FeatureConfig {
        match self.features {
            FeatureArg::AminoChars => FeatureConfig::AminoChars,
            FeatureArg::Tokens => FeatureConfig::Tokens {
                max_terms: self.max_terms,
            },
        }
    }

    fn method_config(&self) -> MethodConfig {
        match self.method {
            MethodArg::UsmKnn => MethodConfig::UsmKnn {
                k: self.k,
                alpha: self.alpha,
                strict_per_fold: self.strict_per_fold,
            },
            MethodArg::FreqKnn => MethodConfig::FreqKnn {
                k: self.k,
                alpha: self.alpha,
                features: self.feature_config(),
            },
            MethodArg::NaiveBayes => MethodConfig::NaiveBayes {
                smoothing: self.smoothing,
                features: self.feature_config(),
            },
        }
    }

    fn fold_spec(&self) -> FoldSpec {
        match self.fold_strategy {
            FoldStrategyArg::Predefined => FoldSpec::Predefined,
            FoldStrategyArg::Stratified => FoldSpec::Stratified { folds: self.folds },
            FoldStrategyArg::Random => FoldSpec::Random { folds: self.folds },
        }
    }
}

#[derive(Args)]
struct ErcArgs {
    /// Predictions CSV written by the cv command.
    #[arg(long, value_name = "FILE")]
    predictions: PathBuf,
    /// Number of equal-width bins.
    #[arg(short, long, default_value_t = 10)]
    bins: usize,
    /// Output directory for erc.csv and erc.svg.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Predictions CSV written by the cv command.
    #[arg(long, value_name = "FILE")]
    predictions: PathBuf,
    /// Number of equal-width reliability bins.
    #[arg(long, default_value_t = 10)]
    erc_bins: usize,
    /// Floor applied to forecast probabilities before taking logs.
    #[arg(long, default_value_t = 1e-10)]
    log_loss_floor: f64,
}

#[derive(Args)]
struct RunArgs {
    /// JSON file holding a full run configuration.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
}

fn build_config(command: &Command) -> Result<RunConfig> {
    match command {
        Command::Matrix(args) => {
            let mut config = RunConfig::new(CommandKind::Matrix);
            config.dataset = Some(dataset_spec(&args.data, &args.labels)?);
            config.compressor = args.compressor.config()?;
            config.pair_cache = args.compressor.pair_cache.into();
            config.parallel = !args.compressor.no_parallel;
            config.output_dir = Some(args.out.clone());
            Ok(config)
        }
        Command::Cv(args) => {
            let mut config = RunConfig::new(CommandKind::Cv);
            config.dataset = Some(dataset_spec(&args.data, &args.labels)?);
            config.method = Some(args.method_config());
            config.folds = Some(args.fold_spec());
            config.compressor = args.compressor.config()?;
            config.pair_cache = args.compressor.pair_cache.into();
            config.parallel = !args.compressor.no_parallel;
            config.seed = args.seed;
            config.matrix = args.matrix.clone();
            config.erc_bins = args.erc_bins;
            config.log_loss_floor = args.log_loss_floor;
            config.output_dir = Some(args.out.clone());
            Ok(config)
        }
        Command::Erc(args) => {
            let mut config = RunConfig::new(CommandKind::Erc);
            config.predictions = Some(args.predictions.clone());
            config.erc_bins = args.bins;
            config.output_dir = Some(args.out.clone());
            Ok(config)
        }
        Command::Report(args) => {
            let mut config = RunConfig::new(CommandKind::Report);
            config.predictions = Some(args.predictions.clone());
            config.erc_bins = args.erc_bins;
            config.log_loss_floor = args.log_loss_floor;
            Ok(config)
        }
        Command::Run(args) => RunConfig::from_json_file(&args.config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    let result = build_config(&cli.command).and_then(|config| cli::run(&config));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
