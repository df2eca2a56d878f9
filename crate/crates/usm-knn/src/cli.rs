//! The batch commands behind the `usmknn` binary.
//!
//! Each command is driven by a [`RunConfig`], a fully serializable record of
//! everything the run consults: dataset location, method, folds, compressor,
//! seed, output paths. The JSON form of the config is embedded verbatim in
//! every report so a run can be replayed from its own output. Environment
//! variables are never consulted.
//!
//! Output files are pure functions of the config and the input data; the
//! only thing that varies between identical runs is the timestamp field of
//! the report, which is kept separate from all data fields for exactly that
//! reason.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::classify::{read_predictions, write_predictions};
use crate::compressor::CompressorConfig;
use crate::dataset::{
    load_delimited, load_fasta, load_labeled_dirs, predefined_folds, random_kfold,
    stratified_kfold, Dataset, FoldAssignment, HeaderLabelRule, LabelRule,
};
use crate::error::{Error, Result};
use crate::evaluate::{
    cross_validate, erc_bins, summarize_predictions, CvOptions, ErcBin, EvaluationReport,
    MethodConfig, MetricsSummary, DEFAULT_ERC_BINS, LOG_LOSS_FLOOR,
};
use crate::metric::{
    build_distance_matrix, format_float, load_cache_rows, load_matrix, persist_cache,
    persist_matrix, ComplexityCache, MatrixConfig, PairCachePolicy,
};

/// Distance matrix written by the `matrix` command.
pub const MATRIX_FILE: &str = "matrix.csv";
/// Complexity cache written by the `matrix` command and reused on reruns.
pub const CACHE_FILE: &str = "complexities.tsv";
/// Per-example predictions written by the `cv` command.
pub const PREDICTIONS_FILE: &str = "predictions.csv";
/// Full metrics report written by the `cv` command.
pub const REPORT_FILE: &str = "report.json";
/// Reliability-curve bins written by the `erc` command.
pub const ERC_CSV_FILE: &str = "erc.csv";
/// Reliability plot written by the `erc` command.
pub const ERC_SVG_FILE: &str = "erc.svg";

/// Which command a [`RunConfig`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Matrix,
    Cv,
    Erc,
    Report,
}

/// Where the sequences come from and how files map to labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "kebab-case")]
pub enum DatasetSpec {
    /// Directory tree: each first-level subdirectory is one predefined
    /// fold, each file inside is one sequence, labels come from filename
    /// prefixes.
    LabeledDirs {
        path: PathBuf,
        #[serde(default)]
        labels: LabelRule,
    },
    /// FASTA file; the label sits in a whitespace-separated header token.
    Fasta {
        path: PathBuf,
        #[serde(default)]
        labels: HeaderLabelRule,
    },
    /// Tab-separated `id<TAB>label<TAB>payload` rows.
    Delimited { path: PathBuf },
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::LabeledDirs { path, labels } => load_labeled_dirs(path, labels),
            DatasetSpec::Fasta { path, labels } => load_fasta(path, labels),
            DatasetSpec::Delimited { path } => load_delimited(path),
        }
    }

    pub fn path(&self) -> &Path {
        match self {
            DatasetSpec::LabeledDirs { path, .. }
            | DatasetSpec::Fasta { path, .. }
            | DatasetSpec::Delimited { path } => path,
        }
    }
}

/// How the data is split for cross-validation. Strategies that shuffle take
/// their randomness from the single [`RunConfig::seed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum FoldSpec {
    /// The fold structure carried by the dataset (e.g. fold directories).
    Predefined,
    /// `folds` splits balancing every class across folds.
    Stratified { folds: usize },
    /// `folds` splits ignoring labels.
    Random { folds: usize },
}

impl FoldSpec {
    pub fn assign(&self, dataset: &Dataset, seed: u64) -> Result<FoldAssignment> {
        match *self {
            FoldSpec::Predefined => predefined_folds(dataset),
            FoldSpec::Stratified { folds } => stratified_kfold(dataset, folds, seed),
            FoldSpec::Random { folds } => random_kfold(dataset, folds, seed),
        }
    }

    /// Whether the strategy consumes the run seed.
    pub fn uses_seed(&self) -> bool {
        !matches!(self, FoldSpec::Predefined)
    }
}

/// One batch run, fully described. Fields irrelevant to the chosen command
/// keep their defaults and are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    /// Input corpus; required by `matrix` and `cv`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dataset: Option<DatasetSpec>,
    /// Learner; required by `cv`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub method: Option<MethodConfig>,
    /// Fold strategy; required by `cv`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub folds: Option<FoldSpec>,
    #[serde(default)]
    pub compressor: CompressorConfig,
    /// The single source of randomness for the whole run.
    #[serde(default)]
    pub seed: u64,
    /// Prebuilt distance matrix CSV to reuse in `cv` instead of compressing
    /// every pair again.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub matrix: Option<PathBuf>,
    /// Predictions CSV to read; required by `erc` and `report`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub predictions: Option<PathBuf>,
    #[serde(default)]
    pub pair_cache: PairCachePolicy,
    #[serde(default = "default_true")]
    pub parallel: bool,
    #[serde(default = "default_erc_bins")]
    pub erc_bins: usize,
    #[serde(default = "default_log_loss_floor")]
    pub log_loss_floor: f64,
    /// Where output files land; required by `matrix`, `cv` and `erc`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub output_dir: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

fn default_erc_bins() -> usize {
    DEFAULT_ERC_BINS
}

fn default_log_loss_floor() -> f64 {
    LOG_LOSS_FLOOR
}

impl RunConfig {
    /// A config for `command` with every optional part absent and every
    /// knob at its default.
    pub fn new(command: CommandKind) -> Self {
        RunConfig {
            command,
            dataset: None,
            method: None,
            folds: None,
            compressor: CompressorConfig::default(),
            seed: 0,
            matrix: None,
            predictions: None,
            pair_cache: PairCachePolicy::default(),
            parallel: true,
            erc_bins: DEFAULT_ERC_BINS,
            log_loss_floor: LOG_LOSS_FLOOR,
            output_dir: None,
        }
    }

    /// Reads a config from a JSON file.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    fn dataset(&self) -> Result<&DatasetSpec> {
        self.dataset
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a dataset".into()))
    }

    fn predictions(&self) -> Result<&Path> {
        self.predictions
            .as_deref()
            .ok_or_else(|| Error::Config("this command needs a predictions file".into()))
    }

    fn output_dir(&self) -> Result<&Path> {
        self.output_dir
            .as_deref()
            .ok_or_else(|| Error::Config("this command needs an output directory".into()))
    }
}

/// What [`cmd_matrix`] wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOutputs {
    pub matrix_path: PathBuf,
    pub cache_path: PathBuf,
    pub sequences: usize,
    /// Complexity-cache rows reused from a previous run.
    pub preloaded: usize,
}

/// Builds the pairwise distance matrix for a corpus and persists it next to
/// the complexity cache. A cache file left by a previous run over the same
/// corpus is reloaded first, so reruns skip the single-sequence
/// compressions; rows whose id or length no longer matches the corpus are
/// dropped rather than trusted.
pub fn cmd_matrix(config: &RunConfig) -> Result<MatrixOutputs> {
    let dataset = config.dataset()?.load()?;
    let out = config.output_dir()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let cache = ComplexityCache::new(config.compressor);
    let cache_path = out.join(CACHE_FILE);
    let mut preloaded = 0usize;
    if cache_path.exists() {
        for (id, raw_length, compressed) in load_cache_rows(&cache_path)? {
            match dataset.get(&id) {
                Some(item) if item.payload.len() == raw_length => {
                    cache.preload_single(&id, raw_length, compressed);
                    preloaded += 1;
                }
                _ => log::warn!("dropping stale cache row for `{id}`"),
            }
        }
        log::info!(
            "reusing {preloaded} cached complexities from {}",
            cache_path.display()
        );
    }
    let matrix_config = MatrixConfig {
        pair_cache: config.pair_cache,
        parallel: config.parallel,
    };
    let matrix = build_distance_matrix(&dataset, &cache, &matrix_config)?;
    let matrix_path = out.join(MATRIX_FILE);
    persist_matrix(&matrix, &matrix_path)?;
    persist_cache(&cache, &cache_path)?;
    Ok(MatrixOutputs {
        matrix_path,
        cache_path,
        sequences: dataset.len(),
        preloaded,
    })
}

/// The report JSON written by [`cmd_cv`]: when it ran, the exact config
/// that produced it, and the scored results. `generated_at_unix` is the
/// only field that differs between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Seconds since the Unix epoch at write time. Metadata only; every
    /// other field is a pure function of config and input data.
    pub generated_at_unix: u64,
    pub config: RunConfig,
    pub evaluation: EvaluationReport,
}

/// What [`cmd_cv`] wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct CvOutputs {
    pub predictions_path: PathBuf,
    pub report_path: PathBuf,
    pub report: RunReport,
}

/// Cross-validates the configured method over the configured corpus and
/// writes the per-example predictions plus the metrics report.
pub fn cmd_cv(config: &RunConfig) -> Result<CvOutputs> {
    let method = config
        .method
        .clone()
        .ok_or_else(|| Error::Config("the cv command needs a method".into()))?;
    let fold_spec = config
        .folds
        .ok_or_else(|| Error::Config("the cv command needs a fold strategy".into()))?;
    let dataset = config.dataset()?.load()?;
    let out = config.output_dir()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let assignment = fold_spec.assign(&dataset, config.seed)?;
    let loaded_matrix = match &config.matrix {
        Some(path) => Some(load_matrix(path)?),
        None => None,
    };
    let options = CvOptions {
        matrix: loaded_matrix.as_ref(),
        compressor: config.compressor,
        seed: fold_spec.uses_seed().then_some(config.seed),
        log_loss_floor: config.log_loss_floor,
        erc_bin_count: config.erc_bins,
        parallel: config.parallel,
    };
    let (predictions, evaluation) = cross_validate(&dataset, &assignment, &method, &options)?;
    let predictions_path = out.join(PREDICTIONS_FILE);
    write_predictions(&predictions_path, &predictions, dataset.vocabulary())?;
    let report = RunReport {
        generated_at_unix: unix_now(),
        config: config.clone(),
        evaluation,
    };
    let report_path = out.join(REPORT_FILE);
    write_json(&report_path, &report)?;
    Ok(CvOutputs {
        predictions_path,
        report_path,
        report,
    })
}

/// What [`cmd_erc`] wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct ErcOutputs {
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
    pub bins: Vec<ErcBin>,
}

/// Bins a predictions file into a reliability curve and writes it twice:
/// as CSV for further processing and as an SVG plot with the diagonal
/// calibration line.
pub fn cmd_erc(config: &RunConfig) -> Result<ErcOutputs> {
    let predictions_path = config.predictions()?;
    let out = config.output_dir()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (predictions, _) = read_predictions(predictions_path)?;
    let bins = erc_bins(&predictions, config.erc_bins)?;
    let csv_path = out.join(ERC_CSV_FILE);
    write_erc_csv(&csv_path, &bins)?;
    let svg_path = out.join(ERC_SVG_FILE);
    fs::write(&svg_path, reliability_svg(&bins)).map_err(|e| Error::io(&svg_path, e))?;
    Ok(ErcOutputs {
        csv_path,
        svg_path,
        bins,
    })
}

/// Recomputes every metric from a predictions file alone. The numbers must
/// agree with the report JSON the run originally wrote; anything else means
/// the predictions file does not actually determine the metrics.
pub fn cmd_report(config: &RunConfig) -> Result<MetricsSummary> {
    let (predictions, vocabulary) = read_predictions(config.predictions()?)?;
    summarize_predictions(
        &predictions,
        &vocabulary,
        config.log_loss_floor,
        config.erc_bins,
    )
}

/// Dispatches on `config.command` and prints what was written (or, for
/// `report`, the recomputed metrics) to stdout.
pub fn run(config: &RunConfig) -> Result<()> {
    match config.command {
        CommandKind::Matrix => {
            let outputs = cmd_matrix(config)?;
            println!(
                "wrote {} ({} sequences)",
                outputs.matrix_path.display(),
                outputs.sequences
            );
            println!("wrote {}", outputs.cache_path.display());
        }
        CommandKind::Cv => {
            let outputs = cmd_cv(config)?;
            println!("wrote {}", outputs.predictions_path.display());
            println!("wrote {}", outputs.report_path.display());
            let evaluation = &outputs.report.evaluation;
            println!("accuracy {:.4}", evaluation.overall_accuracy);
            if let (Some(recall), Some(precision)) =
                (evaluation.spam_recall, evaluation.spam_precision)
            {
                println!("spam recall {recall:.4} precision {precision:.4}");
            }
            println!(
                "brier {:.4} log loss {:.4}",
                evaluation.brier, evaluation.log_loss
            );
        }
        CommandKind::Erc => {
            let outputs = cmd_erc(config)?;
            println!(
                "wrote {} ({} bins)",
                outputs.csv_path.display(),
                outputs.bins.len()
            );
            println!("wrote {}", outputs.svg_path.display());
        }
        CommandKind::Report => {
            let summary = cmd_report(config)?;
            let text = serde_json::to_string_pretty(&summary)
                .map_err(|e| Error::Data(format!("serializing metrics: {e}")))?;
            println!("{text}");
        }
    }
    Ok(())
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path, format!("serializing: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_erc_csv(path: &Path, bins: &[ErcBin]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    writer
        .write_record([
            "lower",
            "upper",
            "mean_forecast",
            "observed_frequency",
            "count",
        ])
        .map_err(|e| Error::format(path, e.to_string()))?;
    for bin in bins {
        writer
            .write_record([
                format_float(bin.lower),
                format_float(bin.upper),
                format_float(bin.mean_forecast),
                format_float(bin.observed_frequency),
                bin.count.to_string(),
            ])
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Renders the reliability curve: observed frequency against mean forecast
/// per occupied bin, with the diagonal line of perfect calibration in red.
/// Pure string building, so identical bins yield identical bytes.
pub fn reliability_svg(bins: &[ErcBin]) -> String {
    const SIZE: f64 = 480.0;
    const MARGIN: f64 = 56.0;
    let span = SIZE - 2.0 * MARGIN;
    let x = |v: f64| MARGIN + v * span;
    let y = |v: f64| SIZE - MARGIN - v * span;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" \
         viewBox=\"0 0 {SIZE} {SIZE}\">"
    );
    let _ = writeln!(
        svg,
        "  <rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\"/>"
    );
    for i in 0..=4 {
        let v = f64::from(i) / 4.0;
        let _ = writeln!(
            svg,
            "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>",
            x(v),
            y(0.0),
            x(v),
            y(1.0)
        );
        let _ = writeln!(
            svg,
            "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>",
            x(0.0),
            y(v),
            x(1.0),
            y(v)
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" \
             fill=\"#333333\">{v}</text>",
            x(v),
            SIZE - MARGIN + 20.0
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\" \
             fill=\"#333333\">{v}</text>",
            MARGIN - 8.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"red\" \
         stroke-width=\"1.5\"/>",
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    let _ = writeln!(
        svg,
        "  <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{span}\" height=\"{span}\" fill=\"none\" \
         stroke=\"#333333\"/>"
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\" \
         fill=\"#333333\">mean forecast</text>",
        x(0.5),
        SIZE - 12.0
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\" \
         fill=\"#333333\" transform=\"rotate(-90 {:.1} {:.1})\">observed frequency</text>",
        16.0,
        y(0.5),
        16.0,
        y(0.5)
    );
    for bin in bins {
        let _ = writeln!(
            svg,
            "  <circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"#1f6feb\" \
             fill-opacity=\"0.85\"><title>[{}, {}): {} points</title></circle>",
            x(bin.mean_forecast),
            y(bin.observed_frequency),
            format_float(bin.lower),
            format_float(bin.upper),
            bin.count
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use tempfile::tempdir;

    use super::*;
    use crate::classify::{Prediction, ProbabilityForecast};
    use crate::synth::{random_bytes, MarkovSource};

    fn write_file(path: &Path, bytes: &[u8]) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, bytes).unwrap();
    }

    /// Two fold directories, each with one compressible text file (legit)
    /// and one incompressible noise file (spam), plus per-fold extras.
    fn toy_spam_tree(root: &Path) {
        let text = MarkovSource::from_seed(7);
        for (fold, dir) in ["part1", "part2"].iter().enumerate() {
            for i in 0..2 {
                let walk = (fold * 10 + i) as u64;
                write_file(
                    &root.join(dir).join(format!("legit{fold}{i}.txt")),
                    &text.sample(walk, 1500),
                );
                write_file(
                    &root.join(dir).join(format!("spmsg{fold}{i}.txt")),
                    &random_bytes(900 + walk, 4096),
                );
            }
        }
    }

    fn toy_fasta(path: &Path) {
        let classes: [(&str, &[u8]); 4] = [
            ("NUCL", b"ACDEF"),
            ("CYTO", b"GHIKL"),
            ("MITO", b"MNPQR"),
            ("EXTR", b"STVWY"),
        ];
        let mut text = String::new();
        for (c, (label, letters)) in classes.iter().enumerate() {
            for i in 0..4 {
                text.push_str(&format!(">P{c}{i:04} {label}\n"));
                let seq: String = (0..60)
                    .map(|j| letters[(i + j) % letters.len()] as char)
                    .collect();
                text.push_str(&seq);
                text.push('\n');
            }
        }
        write_file(path, text.as_bytes());
    }

    fn matrix_config(root: &Path, out: &Path) -> RunConfig {
        let mut config = RunConfig::new(CommandKind::Matrix);
        config.dataset = Some(DatasetSpec::LabeledDirs {
            path: root.to_path_buf(),
            labels: LabelRule::default(),
        });
        config.output_dir = Some(out.to_path_buf());
        config
    }

    fn cv_config(root: &Path, out: &Path) -> RunConfig {
        let mut config = RunConfig::new(CommandKind::Cv);
        config.dataset = Some(DatasetSpec::LabeledDirs {
            path: root.to_path_buf(),
            labels: LabelRule::default(),
        });
        config.method = Some(MethodConfig::UsmKnn {
            k: 1,
            alpha: 0.01,
            strict_per_fold: false,
        });
        config.folds = Some(FoldSpec::Predefined);
        config.output_dir = Some(out.to_path_buf());
        config
    }

    #[test]
    fn run_config_round_trips_through_json() {
        let dir = tempdir().unwrap();
        let mut config = cv_config(&dir.path().join("data"), &dir.path().join("out"));
        config.seed = 17;
        config.matrix = Some(dir.path().join("m.csv"));
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);

        let file = dir.path().join("config.json");
        fs::write(&file, &json).unwrap();
        assert_eq!(RunConfig::from_json_file(&file).unwrap(), config);
    }

    #[test]
    fn minimal_config_json_fills_defaults() {
        let json = r#"{
            "command": "report",
            "predictions": "preds.csv"
        }"#;
        let config: RunConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.command, CommandKind::Report);
        assert_eq!(config.erc_bins, DEFAULT_ERC_BINS);
        assert_eq!(config.log_loss_floor, LOG_LOSS_FLOOR);
        assert!(config.parallel);
        assert_eq!(config.seed, 0);
        assert_eq!(config.compressor, CompressorConfig::default());
        assert!(config.dataset.is_none());
    }

    #[test]
    fn malformed_config_file_is_a_config_error() {
        let dir = tempdir().unwrap();
        let file = dir.path().join("config.json");
        fs::write(&file, "{\"command\": \"warp\"}").unwrap();
        let err = RunConfig::from_json_file(&file).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn matrix_command_writes_symmetric_csv_and_reuses_the_cache() {
        let dir = tempdir().unwrap();
        let root = dir.path().join("data");
        let text = MarkovSource::from_seed(3);
        write_file(&root.join("part1").join("a.txt"), &text.sample(1, 1200));
        write_file(&root.join("part1").join("b.txt"), &text.sample(2, 1500));
        write_file(&root.join("part1").join("c.txt"), &random_bytes(3, 4096));
        let out = dir.path().join("out");
        let config = matrix_config(&root, &out);

        let first = cmd_matrix(&config).unwrap();
        assert_eq!(first.sequences, 3);
        assert_eq!(first.preloaded, 0);
        let matrix = load_matrix(&first.matrix_path).unwrap();
        assert_eq!(matrix.len(), 3);
        for a in matrix.ids() {
            for b in matrix.ids() {
                assert_eq!(
                    matrix.distance(a, b).unwrap(),
                    matrix.distance(b, a).unwrap()
                );
            }
        }
        let matrix_bytes = fs::read(&first.matrix_path).unwrap();
        let cache_bytes = fs::read(&first.cache_path).unwrap();

        let second = cmd_matrix(&config).unwrap();
        assert_eq!(second.preloaded, 3);
        assert_eq!(fs::read(&second.matrix_path).unwrap(), matrix_bytes);
        assert_eq!(fs::read(&second.cache_path).unwrap(), cache_bytes);
    }

    #[test]
    fn stale_cache_rows_are_dropped_not_trusted() {
        let dir = tempdir().unwrap();
        let root = dir.path().join("data");
        write_file(&root.join("part1").join("a.txt"), &random_bytes(1, 2048));
        write_file(&root.join("part1").join("b.txt"), &random_bytes(2, 2048));
        let out = dir.path().join("out");
        fs::create_dir_all(&out).unwrap();
        fs::write(
            out.join(CACHE_FILE),
            "id\traw_length\tcompressed_size\na.txt\t9\t5\nghost.txt\t4\t4\n",
        )
        .unwrap();
        let outputs = cmd_matrix(&matrix_config(&root, &out)).unwrap();
        assert_eq!(outputs.preloaded, 0);
        let rows = load_cache_rows(&outputs.cache_path).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|(id, _, _)| id != "ghost.txt"));
    }

    #[test]
    fn matrix_command_on_a_missing_path_is_a_data_error() {
        let dir = tempdir().unwrap();
        let config = matrix_config(&dir.path().join("nowhere"), &dir.path().join("out"));
        let err = cmd_matrix(&config).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
    }

    #[test]
    fn commands_reject_configs_missing_their_inputs() {
        let bare = RunConfig::new(CommandKind::Cv);
        for err in [
            cmd_matrix(&bare).unwrap_err(),
            cmd_cv(&bare).unwrap_err(),
            cmd_erc(&bare).unwrap_err(),
            cmd_report(&bare).unwrap_err(),
        ] {
            assert!(matches!(err, Error::Config(_)), "{err}");
            assert_eq!(err.exit_code(), 2);
        }
    }

    #[test]
    fn cv_command_writes_predictions_and_a_replayable_report() {
        let dir = tempdir().unwrap();
        let root = dir.path().join("data");
        toy_spam_tree(&root);
        let out = dir.path().join("out");
        let config = cv_config(&root, &out);

        let outputs = cmd_cv(&config).unwrap();
        let report = &outputs.report;
        assert_eq!(report.config, config);
        assert_eq!(report.evaluation.metadata.folds, 2);
        assert_eq!(report.evaluation.overall_accuracy, 1.0);
        assert_eq!(report.evaluation.spam_recall, Some(1.0));
        assert_eq!(report.evaluation.spam_precision, Some(1.0));

        let (predictions, vocabulary) = read_predictions(&outputs.predictions_path).unwrap();
        assert_eq!(predictions.len(), 8);
        assert_eq!(vocabulary, ["legit", "spam"]);

        let saved: RunReport =
            serde_json::from_str(&fs::read_to_string(&outputs.report_path).unwrap()).unwrap();
        assert_eq!(&saved, report);
    }

    #[test]
    fn cv_reruns_differ_only_in_the_timestamp() {
        let dir = tempdir().unwrap();
        let root = dir.path().join("data");
        toy_spam_tree(&root);
        let config = cv_config(&root, &dir.path().join("out"));

        let first = cmd_cv(&config).unwrap();
        let first_predictions = fs::read(&first.predictions_path).unwrap();
        let first_report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&first.report_path).unwrap()).unwrap();

        let second = cmd_cv(&config).unwrap();
        assert_eq!(
            fs::read(&second.predictions_path).unwrap(),
            first_predictions
        );
        let second_report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&second.report_path).unwrap()).unwrap();

        let strip = |mut v: serde_json::Value| {
            v.as_object_mut()
                .unwrap()
                .remove("generated_at_unix")
                .unwrap();
            v
        };
        assert_eq!(strip(second_report), strip(first_report));
    }

    #[test]
    fn cv_command_reuses_a_prebuilt_matrix() {
        let dir = tempdir().unwrap();
        let root = dir.path().join("data");
        toy_spam_tree(&root);
        let out = dir.path().join("out");

        let matrix_outputs = cmd_matrix(&matrix_config(&root, &out)).unwrap();
        let direct = cmd_cv(&cv_config(&root, &dir.path().join("direct"))).unwrap();

        let mut reusing_config = cv_config(&root, &dir.path().join("reusing"));
        reusing_config.matrix = Some(matrix_outputs.matrix_path);
        let reusing = cmd_cv(&reusing_config).unwrap();

        assert_eq!(
            reusing.report.evaluation.confusion,
            direct.report.evaluation.confusion
        );
        assert_eq!(
            reusing.report.evaluation.overall_accuracy,
            direct.report.evaluation.overall_accuracy
        );
    }

    #[test]
    fn cv_command_runs_naive_bayes_over_a_fasta_corpus() {
        let dir = tempdir().unwrap();
        let fasta = dir.path().join("proteins.fasta");
        toy_fasta(&fasta);
        let mut config = RunConfig::new(CommandKind::Cv);
        config.dataset = Some(DatasetSpec::Fasta {
            path: fasta,
            labels: HeaderLabelRule::default(),
        });
        config.method = Some(MethodConfig::NaiveBayes {
            smoothing: 1.0,
            features: crate::evaluate::FeatureConfig::AminoChars,
        });
        config.folds = Some(FoldSpec::Stratified { folds: 2 });
        config.seed = 5;
        config.output_dir = Some(dir.path().join("out"));

        let outputs = cmd_cv(&config).unwrap();
        let evaluation = &outputs.report.evaluation;
        assert_eq!(
            evaluation.confusion.vocabulary(),
            ["CYTO", "EXTR", "MITO", "NUCL"]
        );
        assert_eq!(evaluation.overall_accuracy, 1.0);
        assert_eq!(evaluation.spam_recall, None);
        assert_eq!(evaluation.metadata.seed, Some(5));
    }

    fn synthetic_predictions(path: &Path) {
        let vocabulary = ["no".to_string(), "yes".to_string()];
        let mut predictions = Vec::new();
        for i in 0..40 {
            let p_yes = f64::from(i) / 40.0;
            let truth = if i % 3 == 0 { "yes" } else { "no" };
            let forecast = ProbabilityForecast::new(BTreeMap::from([
                ("yes".to_string(), p_yes),
                ("no".to_string(), 1.0 - p_yes),
            ]))
            .unwrap();
            predictions.push(Prediction {
                id: format!("q{i:02}"),
                true_label: truth.to_string(),
                predicted_label: if p_yes >= 0.5 { "yes" } else { "no" }.to_string(),
                forecast,
            });
        }
        write_predictions(path, &predictions, &vocabulary).unwrap();
    }

    #[test]
    fn erc_command_writes_bins_and_a_deterministic_plot() {
        let dir = tempdir().unwrap();
        let predictions_path = dir.path().join("predictions.csv");
        synthetic_predictions(&predictions_path);
        let mut config = RunConfig::new(CommandKind::Erc);
        config.predictions = Some(predictions_path.clone());
        config.erc_bins = 5;
        config.output_dir = Some(dir.path().join("out"));

        let outputs = cmd_erc(&config).unwrap();
        let (predictions, _) = read_predictions(&predictions_path).unwrap();
        assert_eq!(outputs.bins, erc_bins(&predictions, 5).unwrap());

        let csv_text = fs::read_to_string(&outputs.csv_path).unwrap();
        assert!(csv_text.starts_with("lower,upper,mean_forecast,observed_frequency,count\n"));
        assert_eq!(csv_text.lines().count(), outputs.bins.len() + 1);

        let svg = fs::read_to_string(&outputs.svg_path).unwrap();
        assert!(svg.contains("stroke=\"red\""));
        assert_eq!(svg.matches("<circle").count(), outputs.bins.len());

        let rerun = cmd_erc(&config).unwrap();
        assert_eq!(fs::read(&rerun.csv_path).unwrap(), csv_text.as_bytes());
        assert_eq!(fs::read(&rerun.svg_path).unwrap(), svg.as_bytes());
    }

    #[test]
    fn erc_command_rejects_a_malformed_predictions_file() {
        let dir = tempdir().unwrap();
        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "id,true_label\nq1,yes\n").unwrap();
        let mut config = RunConfig::new(CommandKind::Erc);
        config.predictions = Some(bad);
        config.output_dir = Some(dir.path().join("out"));
        let err = cmd_erc(&config).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn report_command_reproduces_the_report_metrics() {
        let dir = tempdir().unwrap();
        let root = dir.path().join("data");
        toy_spam_tree(&root);
        let config = cv_config(&root, &dir.path().join("out"));
        let cv_outputs = cmd_cv(&config).unwrap();

        let mut report_config = RunConfig::new(CommandKind::Report);
        report_config.predictions = Some(cv_outputs.predictions_path.clone());
        let summary = cmd_report(&report_config).unwrap();

        let evaluation = &cv_outputs.report.evaluation;
        assert_eq!(summary.confusion, evaluation.confusion);
        assert_eq!(summary.overall_accuracy, evaluation.overall_accuracy);
        assert_eq!(summary.per_class_accuracy, evaluation.per_class_accuracy);
        assert_eq!(summary.spam_recall, evaluation.spam_recall);
        assert_eq!(summary.spam_precision, evaluation.spam_precision);
        assert_eq!(summary.brier, evaluation.brier);
        assert_eq!(summary.log_loss, evaluation.log_loss);
        assert_eq!(summary.erc, evaluation.erc);
        assert_eq!(summary.examples, 8);
    }

    #[test]
    fn report_command_fails_on_an_empty_file() {
        let dir = tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        fs::write(&empty, "").unwrap();
        let mut config = RunConfig::new(CommandKind::Report);
        config.predictions = Some(empty);
        assert!(cmd_report(&config).is_err());
    }

    #[test]
    fn reliability_plot_is_a_pure_function_of_the_bins() {
        let bins = vec![
            ErcBin {
                lower: 0.2,
                upper: 0.4,
                mean_forecast: 0.31,
                observed_frequency: 0.25,
                count: 12,
            },
            ErcBin {
                lower: 0.8,
                upper: 1.0,
                mean_forecast: 0.9,
                observed_frequency: 0.95,
                count: 40,
            },
        ];
        let svg = reliability_svg(&bins);
        assert_eq!(svg, reliability_svg(&bins));
        assert!(svg.contains("observed frequency"));
        assert!(svg.contains("40 points"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
