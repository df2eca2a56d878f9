//! Cross-validation driving and all scoring: confusion counts, spam
//! recall/precision, accuracies, Brier and log loss, and reliability-curve
//! binning.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{
    build_vocabulary, char_frequency_vector, knn_neighbors, knn_predict, nb_predict, nb_train,
    token_frequency_vector, DistanceSource, EuclideanSource, FrequencyVector, Prediction,
    ProbabilityForecast, UsmSource,
};
use crate::compressor::CompressorConfig;
use crate::dataset::{Dataset, FoldAssignment, LabeledSequence, AMINO_ACIDS};
use crate::error::{Error, Result};
use crate::metric::{build_distance_matrix, ComplexityCache, DistanceMatrix, MatrixConfig};

/// Forecast probabilities below this floor are lifted before taking logs,
/// so a single zero forecast cannot make the mean loss infinite.
pub const LOG_LOSS_FLOOR: f64 = 1e-10;

/// Default number of equal-width reliability bins.
pub const DEFAULT_ERC_BINS: usize = 10;

/// Counts of (true label, predicted label) pairs over a fixed vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    vocabulary: Vec<String>,
    counts: Vec<Vec<usize>>, // [true][predicted]
}

impl ConfusionMatrix {
    pub fn new(vocabulary: Vec<String>) -> Result<Self> {
        if vocabulary.is_empty() {
            return Err(Error::Config("confusion matrix needs a vocabulary".into()));
        }
        let mut unique = vocabulary.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != vocabulary.len() {
            return Err(Error::Config("vocabulary labels must be unique".into()));
        }
        let v = vocabulary.len();
        Ok(ConfusionMatrix {
            vocabulary,
            counts: vec![vec![0; v]; v],
        })
    }

    pub fn from_predictions(predictions: &[Prediction], vocabulary: &[String]) -> Result<Self> {
        let mut cm = ConfusionMatrix::new(vocabulary.to_vec())?;
        for p in predictions {
            cm.record(&p.true_label, &p.predicted_label)?;
        }
        Ok(cm)
    }

    fn index(&self, label: &str) -> Result<usize> {
        self.vocabulary
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Data(format!("label `{label}` outside the vocabulary")))
    }

    pub fn record(&mut self, true_label: &str, predicted_label: &str) -> Result<()> {
        let t = self.index(true_label)?;
        let p = self.index(predicted_label)?;
        self.counts[t][p] += 1;
        Ok(())
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn count(&self, true_label: &str, predicted_label: &str) -> Result<usize> {
        Ok(self.counts[self.index(true_label)?][self.index(predicted_label)?])
    }

    /// Number of examples whose true label is `label`.
    pub fn true_total(&self, label: &str) -> Result<usize> {
        Ok(self.counts[self.index(label)?].iter().sum())
    }

    /// Number of examples predicted as `label`.
    pub fn predicted_total(&self, label: &str) -> Result<usize> {
        let p = self.index(label)?;
        Ok(self.counts.iter().map(|row| row[p]).sum())
    }

    pub fn total(&self) -> usize {
        self.counts
            .iter()
            .map(|row| row.iter().sum::<usize>())
            .sum()
    }

    pub fn diagonal_total(&self) -> usize {
        (0..self.vocabulary.len()).map(|i| self.counts[i][i]).sum()
    }
}

/// Fraction of true spam that was predicted spam.
pub fn spam_recall(cm: &ConfusionMatrix) -> Result<f64> {
    let n_spam = cm.true_total("spam")?;
    if n_spam == 0 {
        return Err(Error::UndefinedMetric(
            "spam recall with no spam in the test set".into(),
        ));
    }
    Ok(cm.count("spam", "spam")? as f64 / n_spam as f64)
}

/// Fraction of spam predictions that were actually spam.
pub fn spam_precision(cm: &ConfusionMatrix) -> Result<f64> {
    let predicted = cm.predicted_total("spam")?;
    if predicted == 0 {
        return Err(Error::UndefinedMetric(
            "spam precision with no spam predicted".into(),
        ));
    }
    Ok(cm.count("spam", "spam")? as f64 / predicted as f64)
}

/// Overall accuracy and per-class accuracy. Classes with no test examples
/// are omitted from the per-class map.
pub fn class_accuracies(cm: &ConfusionMatrix) -> Result<(f64, BTreeMap<String, f64>)> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric(
            "accuracy of an empty test set".into(),
        ));
    }
    let overall = cm.diagonal_total() as f64 / total as f64;
    let mut per_class = BTreeMap::new();
    for label in cm.vocabulary() {
        let n = cm.true_total(label)?;
        if n > 0 {
            per_class.insert(label.clone(), cm.count(label, label)? as f64 / n as f64);
        }
    }
    Ok((overall, per_class))
}

fn check_scored(predictions: &[Prediction]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::UndefinedMetric(
            "scoring an empty prediction set".into(),
        ));
    }
    for p in predictions {
        if !p.forecast.contains(&p.true_label) {
            return Err(Error::Data(format!(
                "prediction `{}`: true label `{}` missing from the forecast domain",
                p.id, p.true_label
            )));
        }
    }
    Ok(())
}

/// Multi-class square loss: mean over examples of
/// `Σ_y (p̂(y) - 1[y = truth])²`.
pub fn brier_score(predictions: &[Prediction]) -> Result<f64> {
    check_scored(predictions)?;
    let total: f64 = predictions
        .iter()
        .map(|p| {
            p.forecast
                .iter()
                .map(|(label, prob)| {
                    let target = if label == p.true_label { 1.0 } else { 0.0 };
                    (prob - target) * (prob - target)
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Mean negative log of the probability assigned to the true label, with
/// probabilities floored to keep the loss finite.
pub fn log_loss(predictions: &[Prediction], floor: f64) -> Result<f64> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::Config(format!(
            "log-loss floor must be in (0, 1), got {floor}"
        )));
    }
    check_scored(predictions)?;
    let total: f64 = predictions
        .iter()
        .map(|p| -p.forecast.prob(&p.true_label).max(floor).ln())
        .sum();
    Ok(total / predictions.len() as f64)
}

/// One occupied reliability bin: forecasts in `[lower, upper)` (the last
/// bin is right-closed), their mean, and the observed positive fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErcBin {
    pub lower: f64,
    pub upper: f64,
    pub mean_forecast: f64,
    pub observed_frequency: f64,
    pub count: usize,
}

/// Pools predictions one-vs-rest: every (example, label) pair contributes
/// the point (forecast for that label, whether that label was the truth).
pub fn erc_points(predictions: &[Prediction]) -> Vec<(f64, bool)> {
    let mut points = Vec::new();
    for p in predictions {
        for (label, prob) in p.forecast.iter() {
            points.push((prob, label == p.true_label));
        }
    }
    points
}

/// Bins raw (forecast, outcome) points into `bins` equal-width bins over
/// `[0, 1]`; empty bins are omitted.
pub fn erc_bins_from_points(points: &[(f64, bool)], bins: usize) -> Result<Vec<ErcBin>> {
    if bins < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {bins}")));
    }
    let mut counts = vec![0usize; bins];
    let mut forecast_sums = vec![0.0f64; bins];
    let mut positives = vec![0usize; bins];
    for &(p, outcome) in points {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Data(format!("forecast {p} outside [0, 1]")));
        }
        let slot = ((p * bins as f64) as usize).min(bins - 1);
        counts[slot] += 1;
        forecast_sums[slot] += p;
        if outcome {
            positives[slot] += 1;
        }
    }
    Ok((0..bins)
        .filter(|&b| counts[b] > 0)
        .map(|b| ErcBin {
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            mean_forecast: forecast_sums[b] / counts[b] as f64,
            observed_frequency: positives[b] as f64 / counts[b] as f64,
            count: counts[b],
        })
        .collect())
}

/// Reliability bins for a prediction set; see [`erc_points`] for the
/// pooling rule.
pub fn erc_bins(predictions: &[Prediction], bins: usize) -> Result<Vec<ErcBin>> {
    check_scored(predictions)?;
    erc_bins_from_points(&erc_points(predictions), bins)
}

/// Which learner to run and with what parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MethodConfig {
    /// K-NN over USM distances.
    UsmKnn {
        k: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
        /// Compute distances per fold from a fresh cache instead of one
        /// global matrix. Slower; exists to audit the reuse argument.
        #[serde(default)]
        strict_per_fold: bool,
    },
    /// K-NN over Euclidean distance between frequency vectors.
    FreqKnn {
        k: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default)]
        features: FeatureConfig,
    },
    /// Multinomial Naive Bayes over frequency vectors.
    NaiveBayes {
        #[serde(default = "default_smoothing")]
        smoothing: f64,
        #[serde(default)]
        features: FeatureConfig,
    },
}

fn default_alpha() -> f64 {
    0.01
}

fn default_smoothing() -> f64 {
    1.0
}

/// How payloads become frequency vectors for the baseline learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureConfig {
    /// Counts of the 20 amino-acid letters.
    AminoChars,
    /// Counts of the `max_terms` most document-frequent training tokens.
    Tokens {
        #[serde(default = "default_max_terms")]
        max_terms: usize,
    },
}

fn default_max_terms() -> usize {
    500
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig::Tokens {
            max_terms: default_max_terms(),
        }
    }
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::UsmKnn { .. } => "usm-knn",
            MethodConfig::FreqKnn { .. } => "freq-knn",
            MethodConfig::NaiveBayes { .. } => "naive-bayes",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MethodConfig::UsmKnn { k, alpha, .. } => {
                check_k_alpha(k, alpha)?;
            }
            MethodConfig::FreqKnn {
                k,
                alpha,
                ref features,
            } => {
                check_k_alpha(k, alpha)?;
                features.validate()?;
            }
            MethodConfig::NaiveBayes {
                smoothing,
                ref features,
            } => {
                if !(smoothing > 0.0 && smoothing.is_finite()) {
                    return Err(Error::Config(format!(
                        "smoothing must be finite and > 0, got {smoothing}"
                    )));
                }
                features.validate()?;
            }
        }
        Ok(())
    }
}

fn check_k_alpha(k: usize, alpha: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )));
    }
    Ok(())
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if let FeatureConfig::Tokens { max_terms } = self {
            if *max_terms == 0 {
                return Err(Error::Config("max_terms must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Everything about a run that the metrics depend on, recorded verbatim in
/// the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub method: MethodConfig,
    pub folds: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub compressor: Option<CompressorConfig>,
    pub log_loss_floor: f64,
    pub erc_bin_count: usize,
}

/// All metrics for one evaluation, reproducible from the prediction rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metadata: RunMetadata,
    pub confusion: ConfusionMatrix,
    pub overall_accuracy: f64,
    pub per_class_accuracy: BTreeMap<String, f64>,
    /// Only for binary vocabularies containing "spam"; otherwise absent.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spam_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spam_precision: Option<f64>,
    pub brier: f64,
    pub log_loss: f64,
    pub erc: Vec<ErcBin>,
}

/// Everything [`EvaluationReport`] carries except the run metadata, so the
/// same numbers can be recomputed later from a persisted predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub examples: usize,
    pub confusion: ConfusionMatrix,
    pub overall_accuracy: f64,
    pub per_class_accuracy: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spam_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spam_precision: Option<f64>,
    pub brier: f64,
    pub log_loss: f64,
    pub erc: Vec<ErcBin>,
}

/// Scores a finished prediction set. Spam recall/precision are computed
/// only when the task is binary with a "spam" class; when their denominator
/// is empty they are reported as absent, never coerced to 0 or 1.
pub fn summarize_predictions(
    predictions: &[Prediction],
    vocabulary: &[String],
    log_loss_floor: f64,
    erc_bin_count: usize,
) -> Result<MetricsSummary> {
    let confusion = ConfusionMatrix::from_predictions(predictions, vocabulary)?;
    let (overall_accuracy, per_class_accuracy) = class_accuracies(&confusion)?;
    let spam_task = vocabulary.len() == 2 && vocabulary.iter().any(|l| l == "spam");
    let spam_recall = if spam_task {
        optional_metric(spam_recall(&confusion))?
    } else {
        None
    };
    let spam_precision = if spam_task {
        optional_metric(spam_precision(&confusion))?
    } else {
        None
    };
    let brier = brier_score(predictions)?;
    let log_loss = log_loss(predictions, log_loss_floor)?;
    let erc = erc_bins(predictions, erc_bin_count)?;
    Ok(MetricsSummary {
        examples: predictions.len(),
        confusion,
        overall_accuracy,
        per_class_accuracy,
        spam_recall,
        spam_precision,
        brier,
        log_loss,
        erc,
    })
}

/// [`summarize_predictions`] with the run metadata attached.
pub fn evaluate_predictions(
    predictions: &[Prediction],
    vocabulary: &[String],
    metadata: RunMetadata,
) -> Result<EvaluationReport> {
    let summary = summarize_predictions(
        predictions,
        vocabulary,
        metadata.log_loss_floor,
        metadata.erc_bin_count,
    )?;
    Ok(EvaluationReport {
        metadata,
        confusion: summary.confusion,
        overall_accuracy: summary.overall_accuracy,
        per_class_accuracy: summary.per_class_accuracy,
        spam_recall: summary.spam_recall,
        spam_precision: summary.spam_precision,
        brier: summary.brier,
        log_loss: summary.log_loss,
        erc: summary.erc,
    })
}

fn optional_metric(result: Result<f64>) -> Result<Option<f64>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Knobs for [`cross_validate`] that are not part of the method itself.
pub struct CvOptions<'a> {
    /// Prebuilt global USM distance matrix to reuse; must cover every
    /// dataset id. Ignored by non-USM methods and by strict per-fold mode.
    pub matrix: Option<&'a DistanceMatrix>,
    pub compressor: CompressorConfig,
    /// Recorded in the report; the fold assignment itself already encodes
    /// the randomness this seed produced.
    pub seed: Option<u64>,
    pub log_loss_floor: f64,
    pub erc_bin_count: usize,
    /// Parallelize matrix building and per-fold prediction.
    pub parallel: bool,
}

impl Default for CvOptions<'_> {
    fn default() -> Self {
        CvOptions {
            matrix: None,
            compressor: CompressorConfig::default(),
            seed: None,
            log_loss_floor: LOG_LOSS_FLOOR,
            erc_bin_count: DEFAULT_ERC_BINS,
            parallel: true,
        }
    }
}

/// Runs F-fold cross-validation: for each fold, train on the rest, predict
/// the fold, and score the concatenated predictions.
///
/// Per-fold model state (token vocabularies, Naive Bayes parameters) is
/// rebuilt from training folds only. USM distances, however, may be read
/// from one matrix computed over the whole dataset: a cached entry
/// d(test, train) is a function of the two payloads and the compressor
/// alone, so reusing it leaks no label information into training; the
/// same numbers would be computed on demand inside the fold. Strict
/// per-fold mode recomputes them from a fresh cache to make that argument
/// checkable.
///
/// Predictions are emitted fold by fold, each fold in dataset order, and
/// every dataset item is predicted exactly once.
pub fn cross_validate(
    dataset: &Dataset,
    folds: &FoldAssignment,
    method: &MethodConfig,
    options: &CvOptions,
) -> Result<(Vec<Prediction>, EvaluationReport)> {
    method.validate()?;
    let fold_count = folds.fold_count();
    let mut members: Vec<Vec<&LabeledSequence>> = vec![Vec::new(); fold_count];
    for item in dataset.items() {
        members[folds.fold_of(&item.id)?].push(item);
    }
    for (f, fold_members) in members.iter().enumerate() {
        if fold_members.is_empty() {
            return Err(Error::Data(format!("fold {f} has no test items")));
        }
    }
    let vocabulary = dataset.vocabulary().to_vec();

    // One shared distance source for the non-strict USM path.
    let needs_global = matches!(
        method,
        MethodConfig::UsmKnn {
            strict_per_fold: false,
            ..
        }
    );
    let built_matrix: Option<DistanceMatrix> = if needs_global && options.matrix.is_none() {
        let cache = ComplexityCache::new(options.compressor);
        let config = MatrixConfig {
            parallel: options.parallel,
            ..MatrixConfig::default()
        };
        Some(build_distance_matrix(dataset, &cache, &config)?)
    } else {
        None
    };
    let global_matrix: Option<&DistanceMatrix> = if needs_global {
        match options.matrix {
            Some(m) => {
                for id in dataset.ids() {
                    if !m.contains(&id) {
                        return Err(Error::Data(format!(
                            "provided matrix is missing dataset id `{id}`"
                        )));
                    }
                }
                Some(m)
            }
            None => built_matrix.as_ref(),
        }
    } else {
        None
    };

    let mut predictions = Vec::with_capacity(dataset.len());
    for fold_members in &members {
        let test: &[&LabeledSequence] = fold_members;
        let train_ids: Vec<String> = dataset
            .items()
            .iter()
            .filter(|item| !test.iter().any(|t| t.id == item.id))
            .map(|item| item.id.clone())
            .collect();
        let fold_predictions = match method {
            MethodConfig::UsmKnn {
                k,
                alpha,
                strict_per_fold,
            } => {
                let fresh_cache;
                let fly_source;
                let source: &(dyn DistanceSource + Sync) = if *strict_per_fold {
                    fresh_cache = ComplexityCache::new(options.compressor);
                    fly_source = UsmSource {
                        store: dataset,
                        cache: &fresh_cache,
                    };
                    &fly_source
                } else {
                    global_matrix.as_ref().unwrap()
                };
                predict_fold_knn(
                    dataset,
                    source,
                    &train_ids,
                    test,
                    &vocabulary,
                    *k,
                    *alpha,
                    options.parallel,
                )?
            }
            MethodConfig::FreqKnn { k, alpha, features } => {
                let vectors = fold_vectors(dataset, &train_ids, features)?;
                let source = EuclideanSource::new(vectors);
                predict_fold_knn(
                    dataset,
                    &source,
                    &train_ids,
                    test,
                    &vocabulary,
                    *k,
                    *alpha,
                    options.parallel,
                )?
            }
            MethodConfig::NaiveBayes {
                smoothing,
                features,
            } => {
                let vectors = fold_vectors(dataset, &train_ids, features)?;
                let mut train_vectors = Vec::with_capacity(train_ids.len());
                let mut train_labels = Vec::with_capacity(train_ids.len());
                for id in &train_ids {
                    train_vectors.push(vectors[id].clone());
                    train_labels.push(dataset.label_of(id)?.to_string());
                }
                let model = nb_train(&train_vectors, &train_labels, *smoothing)?;
                test.iter()
                    .map(|item| {
                        let (predicted, forecast) = nb_predict(&model, &vectors[&item.id])?;
                        Ok(Prediction {
                            id: item.id.clone(),
                            true_label: item.label.clone(),
                            predicted_label: predicted,
                            forecast: widen_forecast(forecast, &vocabulary)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        predictions.extend(fold_predictions);
    }
    debug_assert_eq!(predictions.len(), dataset.len());

    let metadata = RunMetadata {
        method: method.clone(),
        folds: fold_count,
        seed: options.seed,
        compressor: match method {
            MethodConfig::UsmKnn { .. } => Some(options.compressor),
            _ => None,
        },
        log_loss_floor: options.log_loss_floor,
        erc_bin_count: options.erc_bin_count,
    };
    let report = evaluate_predictions(&predictions, &vocabulary, metadata)?;
    Ok((predictions, report))
}

#[allow(clippy::too_many_arguments)]
fn predict_fold_knn(
    dataset: &Dataset,
    source: &(impl DistanceSource + Sync + ?Sized),
    train_ids: &[String],
    test: &[&LabeledSequence],
    vocabulary: &[String],
    k: usize,
    alpha: f64,
    parallel: bool,
) -> Result<Vec<Prediction>> {
    let predict_one = |item: &&LabeledSequence| -> Result<Prediction> {
        let neighbors = knn_neighbors(source, train_ids, &item.id, k)?;
        let (predicted, forecast) = knn_predict(&neighbors, dataset, vocabulary, alpha)?;
        Ok(Prediction {
            id: item.id.clone(),
            true_label: item.label.clone(),
            predicted_label: predicted,
            forecast,
        })
    };
    if parallel {
        test.par_iter().map(predict_one).collect()
    } else {
        test.iter().map(predict_one).collect()
    }
}

/// Frequency vectors for every dataset item, with any token vocabulary
/// built from the training ids only.
fn fold_vectors(
    dataset: &Dataset,
    train_ids: &[String],
    features: &FeatureConfig,
) -> Result<std::collections::HashMap<String, FrequencyVector>> {
    let mut vectors = std::collections::HashMap::with_capacity(dataset.len());
    match features {
        FeatureConfig::AminoChars => {
            for item in dataset.items() {
                vectors.insert(
                    item.id.clone(),
                    char_frequency_vector(&item.payload, AMINO_ACIDS),
                );
            }
        }
        FeatureConfig::Tokens { max_terms } => {
            let train_items: Vec<LabeledSequence> = dataset
                .items()
                .iter()
                .filter(|item| train_ids.contains(&item.id))
                .cloned()
                .collect();
            let train_set = Dataset::new(train_items)?;
            let tokens = std::sync::Arc::new(build_vocabulary(&train_set, *max_terms));
            for item in dataset.items() {
                vectors.insert(
                    item.id.clone(),
                    token_frequency_vector(&item.payload, &tokens),
                );
            }
        }
    }
    Ok(vectors)
}

/// Extends a forecast to the full label vocabulary, assigning zero to
/// labels the model never saw (possible when a fold's training split
/// misses a class entirely).
fn widen_forecast(
    forecast: ProbabilityForecast,
    vocabulary: &[String],
) -> Result<ProbabilityForecast> {
    if forecast.len() == vocabulary.len() {
        return Ok(forecast);
    }
    let mut p: BTreeMap<String, f64> = vocabulary.iter().map(|l| (l.clone(), 0.0)).collect();
    for (label, prob) in forecast.iter() {
        if let Some(slot) = p.get_mut(label) {
            *slot = prob;
        } else {
            return Err(Error::Data(format!(
                "model class `{label}` missing from the dataset vocabulary"
            )));
        }
    }
    ProbabilityForecast::new(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{predefined_folds, stratified_kfold};
    use crate::synth;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn forecast(pairs: &[(&str, f64)]) -> ProbabilityForecast {
        ProbabilityForecast::new(pairs.iter().map(|(l, p)| (l.to_string(), *p)).collect()).unwrap()
    }

    fn prediction(id: &str, truth: &str, pairs: &[(&str, f64)]) -> Prediction {
        let predicted = pairs
            .iter()
            .fold(
                pairs[0],
                |best, &cur| if cur.1 > best.1 { cur } else { best },
            )
            .0;
        Prediction {
            id: id.to_string(),
            true_label: truth.to_string(),
            predicted_label: predicted.to_string(),
            forecast: forecast(pairs),
        }
    }

    fn binary_cm(n_ss: usize, n_sl: usize, n_ls: usize, n_ll: usize) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::new(vec!["legit".into(), "spam".into()]).unwrap();
        for _ in 0..n_ss {
            cm.record("spam", "spam").unwrap();
        }
        for _ in 0..n_sl {
            cm.record("spam", "legit").unwrap();
        }
        for _ in 0..n_ls {
            cm.record("legit", "spam").unwrap();
        }
        for _ in 0..n_ll {
            cm.record("legit", "legit").unwrap();
        }
        cm
    }

    #[test]
    fn confusion_counts_add_up() {
        let mut cm = binary_cm(4, 2, 1, 3);
        assert_eq!(cm.total(), 10);
        assert_eq!(cm.true_total("spam").unwrap(), 6);
        assert_eq!(cm.predicted_total("spam").unwrap(), 5);
        assert_eq!(cm.diagonal_total(), 7);
        assert!(cm.record("spam", "ham").is_err());
    }

    #[test]
    fn recall_is_caught_spam_over_true_spam() {
        assert_eq!(spam_recall(&binary_cm(481, 0, 0, 100)).unwrap(), 1.0);
        assert_eq!(spam_recall(&binary_cm(0, 10, 0, 100)).unwrap(), 0.0);
        let r = spam_recall(&binary_cm(459, 22, 4, 2000)).unwrap();
        assert!((r - 459.0 / 481.0).abs() < 1e-15);
        assert_eq!(format!("{:.4}", r), "0.9543");
        assert!(matches!(
            spam_recall(&binary_cm(0, 0, 3, 100)),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn precision_is_caught_spam_over_predicted_spam() {
        let p = spam_precision(&binary_cm(459, 22, 4, 2000)).unwrap();
        assert!((p - 459.0 / 463.0).abs() < 1e-15);
        assert_eq!(format!("{:.4}", p), "0.9914");
        assert_eq!(spam_precision(&binary_cm(10, 5, 0, 100)).unwrap(), 1.0);
        assert!(matches!(
            spam_precision(&binary_cm(0, 10, 0, 100)),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn spam_metrics_agree_with_direct_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let labels = ["legit", "spam"];
            let rows: Vec<(&str, &str)> = (0..200)
                .map(|_| (labels[rng.gen_range(0..2)], labels[rng.gen_range(0..2)]))
                .collect();
            let mut cm = ConfusionMatrix::new(vec!["legit".into(), "spam".into()]).unwrap();
            for (t, p) in &rows {
                cm.record(t, p).unwrap();
            }
            let n_spam = rows.iter().filter(|(t, _)| *t == "spam").count();
            let n_ss = rows
                .iter()
                .filter(|(t, p)| *t == "spam" && *p == "spam")
                .count();
            let n_pred = rows.iter().filter(|(_, p)| *p == "spam").count();
            if n_spam > 0 {
                assert_eq!(spam_recall(&cm).unwrap(), n_ss as f64 / n_spam as f64);
            }
            if n_pred > 0 {
                assert_eq!(spam_precision(&cm).unwrap(), n_ss as f64 / n_pred as f64);
            }
        }
    }

    #[test]
    fn accuracies_follow_the_diagonal() {
        let mut cm = ConfusionMatrix::new(vec!["a".into(), "b".into()]).unwrap();
        cm.record("a", "a").unwrap();
        cm.record("b", "b").unwrap();
        let (overall, per_class) = class_accuracies(&cm).unwrap();
        assert_eq!(overall, 1.0);
        assert!(per_class.values().all(|&v| v == 1.0));

        let mut cm = ConfusionMatrix::new(vec!["a".into(), "b".into()]).unwrap();
        cm.record("a", "b").unwrap();
        cm.record("b", "b").unwrap();
        let (overall, per_class) = class_accuracies(&cm).unwrap();
        assert_eq!(overall, 0.5);
        assert_eq!(per_class["a"], 0.0);
        assert_eq!(per_class["b"], 1.0);
    }

    #[test]
    fn four_class_accuracies_match_hand_arithmetic() {
        let labels = ["CYTO", "EXTRA", "MITO", "NUCL"];
        let mut cm = ConfusionMatrix::new(labels.iter().map(|s| s.to_string()).collect()).unwrap();
        // row: true label; values: predicted counts in label order
        let rows = [
            [50usize, 5, 3, 2],
            [4, 80, 1, 5],
            [6, 2, 30, 2],
            [8, 4, 2, 96],
        ];
        for (t, row) in labels.iter().zip(&rows) {
            for (p, &n) in labels.iter().zip(row) {
                for _ in 0..n {
                    cm.record(t, p).unwrap();
                }
            }
        }
        let (overall, per_class) = class_accuracies(&cm).unwrap();
        assert!((per_class["CYTO"] - 50.0 / 60.0).abs() < 1e-15);
        assert!((per_class["EXTRA"] - 80.0 / 90.0).abs() < 1e-15);
        assert!((per_class["MITO"] - 30.0 / 40.0).abs() < 1e-15);
        assert!((per_class["NUCL"] - 96.0 / 110.0).abs() < 1e-15);
        assert!((overall - 256.0 / 300.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_forecasts_have_zero_loss() {
        let predictions = vec![
            prediction("a", "x", &[("x", 1.0), ("y", 0.0)]),
            prediction("b", "y", &[("x", 0.0), ("y", 1.0)]),
        ];
        assert_eq!(brier_score(&predictions).unwrap(), 0.0);
        assert_eq!(log_loss(&predictions, LOG_LOSS_FLOOR).unwrap(), 0.0);
    }

    #[test]
    fn uniform_four_class_forecasts_hit_the_textbook_values() {
        let pairs = [("a", 0.25), ("b", 0.25), ("c", 0.25), ("d", 0.25)];
        let predictions: Vec<Prediction> = (0..8)
            .map(|i| prediction(&format!("p{i}"), "c", &pairs))
            .collect();
        assert!((brier_score(&predictions).unwrap() - 0.75).abs() < 1e-12);
        assert!((log_loss(&predictions, LOG_LOSS_FLOOR).unwrap() - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_truths_are_floored() {
        let predictions = vec![prediction("a", "y", &[("x", 1.0), ("y", 0.0)])];
        let loss = log_loss(&predictions, 1e-10).unwrap();
        assert!((loss - (-(1e-10f64).ln())).abs() < 1e-9);
        assert!((loss - 23.0259).abs() < 1e-3);
    }

    #[test]
    fn mixed_set_matches_hand_computation() {
        let predictions = vec![
            prediction("a", "x", &[("x", 0.8), ("y", 0.2)]),
            prediction("b", "y", &[("x", 0.6), ("y", 0.4)]),
            prediction("c", "x", &[("x", 0.5), ("y", 0.5)]),
        ];
        let expected_brier = ((0.04f64 + 0.04) + (0.36 + 0.36) + (0.25 + 0.25)) / 3.0;
        assert!((brier_score(&predictions).unwrap() - expected_brier).abs() < 1e-15);
        let expected_log = -(0.8f64.ln() + 0.4f64.ln() + 0.5f64.ln()) / 3.0;
        assert!((log_loss(&predictions, LOG_LOSS_FLOOR).unwrap() - expected_log).abs() < 1e-15);
    }

    #[test]
    fn losses_are_minimized_by_the_empirical_distribution() {
        // 6 of 10 examples are "a": the best constant forecast is (0.6, 0.4).
        let truths: Vec<&str> = (0..10).map(|i| if i < 6 { "a" } else { "b" }).collect();
        let mut best_brier = (f64::INFINITY, 0.0);
        let mut best_log = (f64::INFINITY, 0.0);
        for step in 1..100 {
            let q = step as f64 / 100.0;
            let predictions: Vec<Prediction> = truths
                .iter()
                .enumerate()
                .map(|(i, t)| prediction(&format!("p{i}"), t, &[("a", q), ("b", 1.0 - q)]))
                .collect();
            let brier = brier_score(&predictions).unwrap();
            let log = log_loss(&predictions, LOG_LOSS_FLOOR).unwrap();
            if brier < best_brier.0 {
                best_brier = (brier, q);
            }
            if log < best_log.0 {
                best_log = (log, q);
            }
        }
        assert!((best_brier.1 - 0.6).abs() < 1e-9);
        assert!((best_log.1 - 0.6).abs() < 1e-9);
    }

    #[test]
    fn single_bin_point_mass_sits_on_the_calibration_line() {
        let points: Vec<(f64, bool)> = (0..100).map(|i| (0.7, i < 70)).collect();
        let bins = erc_bins_from_points(&points, 10).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].count, 100);
        assert!((bins[0].mean_forecast - 0.7).abs() < 1e-12);
        assert!((bins[0].observed_frequency - 0.7).abs() < 1e-12);
        assert_eq!(bins[0].lower, 0.7);
        assert_eq!(bins[0].upper, 0.8);
    }

    #[test]
    fn confident_correct_forecasts_fill_the_extreme_bins() {
        let predictions: Vec<Prediction> = (0..10)
            .map(|i| prediction(&format!("p{i}"), "x", &[("x", 1.0), ("y", 0.0)]))
            .collect();
        let bins = erc_bins(&predictions, 10).unwrap();
        assert_eq!(bins.len(), 2);
        assert_eq!(bins[0].lower, 0.0);
        assert_eq!(bins[0].observed_frequency, 0.0);
        assert_eq!(bins[1].upper, 1.0);
        assert_eq!(bins[1].observed_frequency, 1.0);
    }

    #[test]
    fn binning_matches_a_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points: Vec<(f64, bool)> = (0..500)
            .map(|_| (rng.gen::<f64>(), rng.gen::<bool>()))
            .collect();
        let bins = erc_bins_from_points(&points, 10).unwrap();
        // Oracle: explicit per-bin filtering with the same edge rule.
        for b in 0..10 {
            let lower = b as f64 / 10.0;
            let upper = (b + 1) as f64 / 10.0;
            let members: Vec<&(f64, bool)> = points
                .iter()
                .filter(|(p, _)| {
                    let slot = ((p * 10.0) as usize).min(9);
                    slot == b
                })
                .collect();
            let found = bins.iter().find(|bin| bin.lower == lower);
            if members.is_empty() {
                assert!(found.is_none());
                continue;
            }
            let bin = found.unwrap();
            assert_eq!(bin.upper, upper);
            assert_eq!(bin.count, members.len());
            let mean: f64 = members.iter().map(|(p, _)| p).sum::<f64>() / members.len() as f64;
            let freq = members.iter().filter(|(_, o)| *o).count() as f64 / members.len() as f64;
            assert!((bin.mean_forecast - mean).abs() < 1e-12);
            assert!((bin.observed_frequency - freq).abs() < 1e-12);
        }
    }

    /// Forecasts drawn uniformly, labels sampled from the forecasts: the
    /// reliability curve must hug the diagonal.
    fn calibrated_predictions(n: usize, seed: u64) -> Vec<Prediction> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let q: f64 = rng.gen();
                let truth = if rng.gen::<f64>() < q { "pos" } else { "neg" };
                prediction(&format!("p{i}"), truth, &[("neg", 1.0 - q), ("pos", q)])
            })
            .collect()
    }

    #[test]
    fn calibrated_forecaster_stays_near_the_diagonal() {
        let predictions = calibrated_predictions(10_000, 13);
        let bins = erc_bins(&predictions, 10).unwrap();
        assert!(!bins.is_empty());
        let mad: f64 = bins
            .iter()
            .map(|b| (b.mean_forecast - b.observed_frequency).abs())
            .sum::<f64>()
            / bins.len() as f64;
        assert!(mad < 0.05, "mean absolute deviation {mad}");
    }

    #[test]
    fn overconfident_forecaster_falls_below_the_diagonal() {
        // True positive rate is 0.6 at a claimed 0.95.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let predictions: Vec<Prediction> = (0..2000)
            .map(|i| {
                let truth = if rng.gen::<f64>() < 0.6 { "pos" } else { "neg" };
                prediction(&format!("p{i}"), truth, &[("neg", 0.05), ("pos", 0.95)])
            })
            .collect();
        let bins = erc_bins(&predictions, 10).unwrap();
        let top = bins.iter().find(|b| b.mean_forecast > 0.9).unwrap();
        assert!(top.observed_frequency < top.mean_forecast - 0.2);
    }

    fn item(id: &str, label: &str, payload: Vec<u8>, fold: Option<usize>) -> LabeledSequence {
        LabeledSequence {
            id: id.to_string(),
            label: label.to_string(),
            payload,
            origin: "test".into(),
            fold_hint: fold,
        }
    }

    fn separable_corpus() -> Dataset {
        let mut items = Vec::new();
        for i in 0..6 {
            items.push(item(
                &format!("rep-{i}"),
                "repetitive",
                synth::repetitive(b"pattern ", 1200 + i * 64),
                None,
            ));
            items.push(item(
                &format!("rnd-{i}"),
                "random",
                synth::random_bytes(40 + i as u64, 4096 + i * 64),
                None,
            ));
        }
        Dataset::new(items).unwrap()
    }

    #[test]
    fn separable_classes_cross_validate_perfectly() {
        let dataset = separable_corpus();
        let folds = stratified_kfold(&dataset, 2, 9).unwrap();
        let method = MethodConfig::UsmKnn {
            k: 1,
            alpha: 0.0,
            strict_per_fold: false,
        };
        let (predictions, report) =
            cross_validate(&dataset, &folds, &method, &CvOptions::default()).unwrap();
        assert_eq!(predictions.len(), dataset.len());
        assert_eq!(report.overall_accuracy, 1.0);
        assert!(report.spam_recall.is_none());
    }

    #[test]
    fn every_item_is_predicted_exactly_once() {
        let dataset = separable_corpus();
        let folds = stratified_kfold(&dataset, 3, 10).unwrap();
        let method = MethodConfig::UsmKnn {
            k: 3,
            alpha: 0.01,
            strict_per_fold: false,
        };
        let (predictions, _) =
            cross_validate(&dataset, &folds, &method, &CvOptions::default()).unwrap();
        let mut seen: Vec<&str> = predictions.iter().map(|p| p.id.as_str()).collect();
        seen.sort();
        let mut expected = dataset.ids();
        expected.sort();
        assert_eq!(seen, expected);
    }

    #[test]
    fn identical_runs_produce_identical_reports() {
        let dataset = separable_corpus();
        let folds = stratified_kfold(&dataset, 2, 4).unwrap();
        let method = MethodConfig::UsmKnn {
            k: 3,
            alpha: 0.01,
            strict_per_fold: false,
        };
        let (p1, r1) = cross_validate(&dataset, &folds, &method, &CvOptions::default()).unwrap();
        let (p2, r2) = cross_validate(&dataset, &folds, &method, &CvOptions::default()).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
    }

    #[test]
    fn twins_split_across_folds_find_each_other_at_k1() {
        let twin = synth::repetitive(b"twin payload ", 1024);
        let items = vec![
            item("twin-a", "twin", twin.clone(), Some(0)),
            item("filler-a1", "noise", synth::random_bytes(1, 4096), Some(0)),
            item("filler-a2", "noise", synth::random_bytes(2, 4200), Some(0)),
            item("twin-b", "twin", twin, Some(1)),
            item("filler-b1", "noise", synth::random_bytes(3, 4100), Some(1)),
            item("filler-b2", "noise", synth::random_bytes(4, 4300), Some(1)),
        ];
        let dataset = Dataset::new(items).unwrap();
        let folds = predefined_folds(&dataset).unwrap();
        let method = MethodConfig::UsmKnn {
            k: 1,
            alpha: 0.0,
            strict_per_fold: false,
        };
        let (predictions, _) =
            cross_validate(&dataset, &folds, &method, &CvOptions::default()).unwrap();
        for id in ["twin-a", "twin-b"] {
            let p = predictions.iter().find(|p| p.id == id).unwrap();
            assert_eq!(p.predicted_label, "twin", "{id}");
        }
    }

    #[test]
    fn strict_per_fold_mode_reproduces_the_global_matrix_results() {
        let dataset = synth::two_source_corpus(3, 6, 1200).unwrap();
        let folds = stratified_kfold(&dataset, 2, 5).unwrap();
        let global = MethodConfig::UsmKnn {
            k: 3,
            alpha: 0.01,
            strict_per_fold: false,
        };
        let strict = MethodConfig::UsmKnn {
            k: 3,
            alpha: 0.01,
            strict_per_fold: true,
        };
        let (p1, _) = cross_validate(&dataset, &folds, &global, &CvOptions::default()).unwrap();
        let (p2, _) = cross_validate(&dataset, &folds, &strict, &CvOptions::default()).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn freq_knn_separates_composition_classes() {
        let mut items = Vec::new();
        for i in 0..6 {
            // "alanine" class: mostly A with some C; "tryptophan" class:
            // mostly W with some Y.
            let a = synth::repetitive(b"AAAAAC", 300 + i * 10);
            let w = synth::repetitive(b"WWWWWY", 300 + i * 10);
            items.push(item(&format!("a-{i}"), "alanine", a, None));
            items.push(item(&format!("w-{i}"), "tryptophan", w, None));
        }
        let dataset = Dataset::new(items).unwrap();
        let folds = stratified_kfold(&dataset, 2, 6).unwrap();
        let method = MethodConfig::FreqKnn {
            k: 1,
            alpha: 0.0,
            features: FeatureConfig::AminoChars,
        };
        let (_, report) = cross_validate(&dataset, &folds, &method, &CvOptions::default()).unwrap();
        assert_eq!(report.overall_accuracy, 1.0);
    }

    #[test]
    fn naive_bayes_separates_token_classes() {
        let mut items = Vec::new();
        for i in 0..6 {
            items.push(item(
                &format!("s-{i}"),
                "spam",
                format!("buy gold now offer {i} gold buy").into_bytes(),
                None,
            ));
            items.push(item(
                &format!("l-{i}"),
                "legit",
                format!("meeting notes agenda {i} project review").into_bytes(),
                None,
            ));
        }
        let dataset = Dataset::new(items).unwrap();
        let folds = stratified_kfold(&dataset, 2, 7).unwrap();
        let method = MethodConfig::NaiveBayes {
            smoothing: 1.0,
            features: FeatureConfig::Tokens { max_terms: 50 },
        };
        let (predictions, report) =
            cross_validate(&dataset, &folds, &method, &CvOptions::default()).unwrap();
        assert_eq!(report.overall_accuracy, 1.0);
        assert!(report.spam_recall.is_some());
        assert_eq!(report.spam_recall.unwrap(), 1.0);
        for p in &predictions {
            let sum: f64 = p.forecast.iter().map(|(_, v)| v).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unseen_class_in_training_still_yields_full_domain_forecasts() {
        // The only "rare" item sits alone in fold 0, so fold 0's training
        // data has no "rare" class at all.
        let items = vec![
            item(
                "rare-0",
                "rare",
                b"unique rare tokens entirely".to_vec(),
                Some(0),
            ),
            item("s-0", "spam", b"buy gold now".to_vec(), Some(0)),
            item("l-0", "legit", b"meeting agenda notes".to_vec(), Some(0)),
            item("s-1", "spam", b"gold offer buy buy".to_vec(), Some(1)),
            item("l-1", "legit", b"project review meeting".to_vec(), Some(1)),
            item("s-2", "spam", b"now gold buy offer".to_vec(), Some(1)),
            item("l-2", "legit", b"notes review project".to_vec(), Some(1)),
        ];
        let dataset = Dataset::new(items).unwrap();
        let folds = predefined_folds(&dataset).unwrap();
        let method = MethodConfig::NaiveBayes {
            smoothing: 1.0,
            features: FeatureConfig::Tokens { max_terms: 50 },
        };
        let (predictions, report) =
            cross_validate(&dataset, &folds, &method, &CvOptions::default()).unwrap();
        assert_eq!(predictions.len(), 7);
        let rare = predictions.iter().find(|p| p.id == "rare-0").unwrap();
        assert!(rare.forecast.contains("rare"));
        assert_eq!(rare.forecast.prob("rare"), 0.0);
        assert_eq!(report.confusion.vocabulary().len(), 3);
    }

    #[test]
    fn provided_matrix_must_cover_the_dataset() {
        let dataset = separable_corpus();
        let folds = stratified_kfold(&dataset, 2, 8).unwrap();
        let partial_items: Vec<LabeledSequence> = dataset.items().iter().take(4).cloned().collect();
        let partial = Dataset::new(partial_items).unwrap();
        let cache = ComplexityCache::new(CompressorConfig::default());
        let matrix = build_distance_matrix(&partial, &cache, &MatrixConfig::default()).unwrap();
        let method = MethodConfig::UsmKnn {
            k: 1,
            alpha: 0.0,
            strict_per_fold: false,
        };
        let options = CvOptions {
            matrix: Some(&matrix),
            ..CvOptions::default()
        };
        assert!(matches!(
            cross_validate(&dataset, &folds, &method, &options),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn invalid_method_configs_are_rejected() {
        assert!(MethodConfig::UsmKnn {
            k: 0,
            alpha: 0.0,
            strict_per_fold: false
        }
        .validate()
        .is_err());
        assert!(MethodConfig::FreqKnn {
            k: 1,
            alpha: -0.5,
            features: FeatureConfig::AminoChars
        }
        .validate()
        .is_err());
        assert!(MethodConfig::NaiveBayes {
            smoothing: 0.0,
            features: FeatureConfig::default()
        }
        .validate()
        .is_err());
        assert!(MethodConfig::NaiveBayes {
            smoothing: 1.0,
            features: FeatureConfig::Tokens { max_terms: 0 }
        }
        .validate()
        .is_err());
    }

    #[test]
    fn method_configs_round_trip_through_json() {
        let method = MethodConfig::UsmKnn {
            k: 20,
            alpha: 0.01,
            strict_per_fold: false,
        };
        let json = serde_json::to_string(&method).unwrap();
        assert!(json.contains("\"usm-knn\""));
        let back: MethodConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, method);

        let parsed: MethodConfig = serde_json::from_str(r#"{"method":"naive-bayes"}"#).unwrap();
        assert_eq!(
            parsed,
            MethodConfig::NaiveBayes {
                smoothing: 1.0,
                features: FeatureConfig::default()
            }
        );
    }
}
