//! K-NN prediction over any distance source, probability forecasting, and
//! the word-vector / Naive Bayes baselines.
//!
//! The K-NN forecast for label `y` is `(K_y + α) / (K + α·|Y|)` where `K_y`
//! counts neighbors with label `y`; with `α = 0` this reduces to the plain
//! relative count `K_y / K`. Predictions depend only on distance *ranks*,
//! so any strictly increasing rescaling of a distance source leaves them
//! unchanged.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metric::{format_float, DistanceMatrix};

/// Anything that can answer "how far apart are these two ids".
pub trait DistanceSource {
    fn distance(&self, a: &str, b: &str) -> Result<f64>;
}

impl DistanceSource for DistanceMatrix {
    fn distance(&self, a: &str, b: &str) -> Result<f64> {
        DistanceMatrix::distance(self, a, b)
    }
}

impl<T: DistanceSource + ?Sized> DistanceSource for &T {
    fn distance(&self, a: &str, b: &str) -> Result<f64> {
        (**self).distance(a, b)
    }
}

/// A [`DistanceSource`] that computes USM distances on demand from payloads
/// and a complexity cache, instead of requiring a prebuilt matrix.
pub struct UsmSource<'a, S: crate::dataset::PayloadSource + ?Sized> {
    pub store: &'a S,
    pub cache: &'a crate::metric::ComplexityCache,
}

impl<S: crate::dataset::PayloadSource + ?Sized> DistanceSource for UsmSource<'_, S> {
    fn distance(&self, a: &str, b: &str) -> Result<f64> {
        crate::metric::usm_distance(self.store, a, b, self.cache)
    }
}

/// Anything that can answer "what is the label of this id".
pub trait LabelSource {
    fn label_of(&self, id: &str) -> Result<&str>;
}

impl LabelSource for Dataset {
    fn label_of(&self, id: &str) -> Result<&str> {
        Dataset::label_of(self, id)
    }
}

impl LabelSource for HashMap<String, String> {
    fn label_of(&self, id: &str) -> Result<&str> {
        self.get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }
}

impl LabelSource for BTreeMap<String, String> {
    fn label_of(&self, id: &str) -> Result<&str> {
        self.get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }
}

/// The K nearest training entries for one query, ascending by
/// `(distance, id)`. Never contains the query's own id.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    entries: Vec<(String, f64)>,
}

impl NeighborList {
    /// Builds a list from entries that must already be strictly sorted by
    /// `(distance, id)`.
    pub fn from_entries(entries: Vec<(String, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("neighbor list must not be empty".into()));
        }
        for window in entries.windows(2) {
            let (a, b) = (&window[0], &window[1]);
            if !a.1.is_finite() || !b.1.is_finite() {
                return Err(Error::Config("neighbor distances must be finite".into()));
            }
            let ordered = a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0));
            if ordered != std::cmp::Ordering::Less {
                return Err(Error::Config(format!(
                    "neighbor entries out of order: ({}, {}) before ({}, {})",
                    a.0, a.1, b.0, b.1
                )));
            }
        }
        Ok(NeighborList { entries })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The K smallest-distance training entries for `query`, excluding `query`
/// itself; ties at the cut broken by ascending id.
pub fn knn_neighbors(
    distances: &(impl DistanceSource + ?Sized),
    train_ids: &[String],
    query: &str,
    k: usize,
) -> Result<NeighborList> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let mut candidates = Vec::with_capacity(train_ids.len());
    for id in train_ids {
        if id == query {
            continue;
        }
        candidates.push((id.clone(), distances.distance(query, id)?));
    }
    if candidates.len() < k {
        return Err(Error::Config(format!(
            "K = {k} but only {} training points are available for query `{query}`",
            candidates.len()
        )));
    }
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    candidates.truncate(k);
    NeighborList::from_entries(candidates)
}

/// A probability distribution over the label vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityForecast {
    p: BTreeMap<String, f64>,
}

impl ProbabilityForecast {
    /// Validates that entries lie in `[0, 1]` and sum to 1 within 1e-9.
    pub fn new(p: BTreeMap<String, f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Config("forecast over an empty vocabulary".into()));
        }
        let mut sum = 0.0;
        for (label, &value) in &p {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config(format!(
                    "forecast probability {value} for `{label}` outside [0, 1]"
                )));
            }
            sum += value;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "forecast probabilities sum to {sum}, not 1"
            )));
        }
        Ok(ProbabilityForecast { p })
    }

    /// Probability assigned to `label`; zero for labels outside the domain.
    pub fn prob(&self, label: &str) -> f64 {
        self.p.get(label).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.p.contains_key(label)
    }

    /// `(label, probability)` pairs in lexicographic label order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.p.iter().map(|(l, &v)| (l.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// Turns a neighbor list into a smoothed probability forecast and a
/// predicted label.
///
/// `p[y] = (K_y + alpha) / (K + alpha·|vocabulary|)`; the prediction is the
/// argmax, with ties going to the vocabulary-earlier label.
pub fn knn_predict(
    neighbors: &NeighborList,
    labels: &(impl LabelSource + ?Sized),
    vocabulary: &[String],
    alpha: f64,
) -> Result<(String, ProbabilityForecast)> {
    if neighbors.is_empty() {
        return Err(Error::Config("cannot predict from zero neighbors".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )));
    }
    if vocabulary.is_empty() {
        return Err(Error::Config("empty label vocabulary".into()));
    }
    let mut counts: BTreeMap<&str, usize> = vocabulary.iter().map(|l| (l.as_str(), 0)).collect();
    for (id, _) in neighbors.entries() {
        let label = labels.label_of(id)?;
        match counts.get_mut(label) {
            Some(c) => *c += 1,
            None => {
                return Err(Error::Data(format!(
                    "neighbor `{id}` has label `{label}` outside the vocabulary"
                )))
            }
        }
    }
    let k = neighbors.len() as f64;
    let denom = k + alpha * vocabulary.len() as f64;
    let p: BTreeMap<String, f64> = counts
        .iter()
        .map(|(label, &c)| (label.to_string(), (c as f64 + alpha) / denom))
        .collect();
    let forecast = ProbabilityForecast::new(p)?;
    let mut best = &vocabulary[0];
    for label in &vocabulary[1..] {
        if forecast.prob(label) > forecast.prob(best) {
            best = label;
        }
    }
    Ok((best.clone(), forecast))
}

/// Counts over a fixed, ordered feature list.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVector {
    dims: Arc<Vec<String>>,
    counts: Vec<f64>,
    ignored: usize,
}

impl FrequencyVector {
    pub fn new(dims: Arc<Vec<String>>, counts: Vec<f64>, ignored: usize) -> Self {
        assert_eq!(dims.len(), counts.len(), "dims and counts must align");
        assert!(counts.iter().all(|c| c.is_finite() && *c >= 0.0));
        FrequencyVector {
            dims,
            counts,
            ignored,
        }
    }

    pub fn dims(&self) -> &Arc<Vec<String>> {
        &self.dims
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    /// How many payload symbols or tokens fell outside the feature list.
    pub fn ignored(&self) -> usize {
        self.ignored
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Shared dimension list for single-byte alphabets such as
/// [`crate::dataset::AMINO_ACIDS`].
pub fn byte_alphabet_dims(alphabet: &[u8]) -> Arc<Vec<String>> {
    assert!(!alphabet.is_empty(), "alphabet must be non-empty");
    Arc::new(alphabet.iter().map(|&b| (b as char).to_string()).collect())
}

/// Counts each alphabet symbol in the payload; bytes outside the alphabet
/// are skipped and tallied in the vector's `ignored` counter.
pub fn char_frequency_vector(payload: &[u8], alphabet: &[u8]) -> FrequencyVector {
    let dims = byte_alphabet_dims(alphabet);
    let mut position = [usize::MAX; 256];
    for (i, &b) in alphabet.iter().enumerate() {
        assert_eq!(
            position[b as usize],
            usize::MAX,
            "alphabet symbols must be unique"
        );
        position[b as usize] = i;
    }
    let mut counts = vec![0.0f64; alphabet.len()];
    let mut ignored = 0usize;
    for &b in payload {
        let slot = position[b as usize];
        if slot == usize::MAX {
            ignored += 1;
        } else {
            counts[slot] += 1.0;
        }
    }
    FrequencyVector::new(dims, counts, ignored)
}

/// Maximal runs of ASCII alphanumeric bytes, lowercased. Anything else
/// (punctuation, whitespace, bytes above 0x7F) separates tokens.
pub fn tokenize(payload: &[u8]) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for &b in payload {
        if b.is_ascii_alphanumeric() {
            current.push(b.to_ascii_lowercase() as char);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// The `max_terms` most document-frequent tokens across the training set,
/// ties broken by lexicographic token order.
pub fn build_vocabulary(train: &Dataset, max_terms: usize) -> Vec<String> {
    let mut doc_frequency: HashMap<String, usize> = HashMap::new();
    for item in train.items() {
        let mut seen: Vec<String> = tokenize(&item.payload);
        seen.sort();
        seen.dedup();
        for token in seen {
            *doc_frequency.entry(token).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = doc_frequency.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_terms);
    ranked.into_iter().map(|(token, _)| token).collect()
}

/// Counts vocabulary tokens in the payload; out-of-vocabulary tokens are
/// skipped and tallied in the vector's `ignored` counter.
pub fn token_frequency_vector(payload: &[u8], vocabulary: &Arc<Vec<String>>) -> FrequencyVector {
    let index: HashMap<&str, usize> = vocabulary
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let mut counts = vec![0.0f64; vocabulary.len()];
    let mut ignored = 0usize;
    for token in tokenize(payload) {
        match index.get(token.as_str()) {
            Some(&i) => counts[i] += 1.0,
            None => ignored += 1,
        }
    }
    FrequencyVector::new(vocabulary.clone(), counts, ignored)
}

/// Plain Euclidean distance between two frequency vectors over the same
/// dimension list.
pub fn euclidean_knn_distance(u: &FrequencyVector, v: &FrequencyVector) -> f64 {
    assert_eq!(
        u.dims(),
        v.dims(),
        "vectors come from different feature spaces"
    );
    u.counts()
        .iter()
        .zip(v.counts())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// A [`DistanceSource`] over per-id frequency vectors, measured with
/// Euclidean distance. Backs the frequency-vector K-NN baseline.
pub struct EuclideanSource {
    vectors: HashMap<String, FrequencyVector>,
}

impl EuclideanSource {
    pub fn new(vectors: HashMap<String, FrequencyVector>) -> Self {
        EuclideanSource { vectors }
    }

    fn vector(&self, id: &str) -> Result<&FrequencyVector> {
        self.vectors
            .get(id)
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }
}

impl DistanceSource for EuclideanSource {
    fn distance(&self, a: &str, b: &str) -> Result<f64> {
        Ok(euclidean_knn_distance(self.vector(a)?, self.vector(b)?))
    }
}

/// Multinomial Naive Bayes over frequency vectors.
#[derive(Debug, Clone)]
pub struct NaiveBayesModel {
    classes: Vec<String>,
    dims: Arc<Vec<String>>,
    log_priors: Vec<f64>,
    log_theta: Vec<Vec<f64>>, // [class][feature]
    smoothing: f64,
}

impl NaiveBayesModel {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Per-class feature probabilities (exponentiated), for invariant
    /// checks: each row sums to 1.
    pub fn feature_probabilities(&self, class: &str) -> Option<Vec<f64>> {
        let idx = self.classes.iter().position(|c| c == class)?;
        Some(self.log_theta[idx].iter().map(|l| l.exp()).collect())
    }
}

/// Fits a multinomial model with Laplace-style smoothing:
/// `θ[y][i] = (count_y(i) + s) / (total_y + s·D)`.
pub fn nb_train(
    vectors: &[FrequencyVector],
    labels: &[String],
    smoothing: f64,
) -> Result<NaiveBayesModel> {
    if vectors.is_empty() {
        return Err(Error::Config("cannot train on an empty set".into()));
    }
    if vectors.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} vectors but {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(Error::Config(format!(
            "smoothing must be finite and > 0, got {smoothing}"
        )));
    }
    let dims = vectors[0].dims().clone();
    if vectors.iter().any(|v| v.dims() != &dims) {
        return Err(Error::Config(
            "training vectors come from different feature spaces".into(),
        ));
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    let class_index: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let d = dims.len();
    let mut feature_sums = vec![vec![0.0f64; d]; classes.len()];
    let mut class_counts = vec![0usize; classes.len()];
    for (vector, label) in vectors.iter().zip(labels) {
        let y = class_index[label.as_str()];
        class_counts[y] += 1;
        for (i, &c) in vector.counts().iter().enumerate() {
            feature_sums[y][i] += c;
        }
    }
    let n = vectors.len() as f64;
    let log_priors = class_counts.iter().map(|&c| (c as f64 / n).ln()).collect();
    let log_theta = feature_sums
        .iter()
        .map(|sums| {
            let total: f64 = sums.iter().sum();
            let denom = total + smoothing * d as f64;
            sums.iter()
                .map(|&s| ((s + smoothing) / denom).ln())
                .collect()
        })
        .collect();
    Ok(NaiveBayesModel {
        classes,
        dims,
        log_priors,
        log_theta,
        smoothing,
    })
}

/// Scores a vector under the model and returns the argmax class together
/// with the normalized forecast. Log scores are shifted by their maximum
/// before exponentiating, so extreme counts cannot underflow to all-zero.
pub fn nb_predict(
    model: &NaiveBayesModel,
    vector: &FrequencyVector,
) -> Result<(String, ProbabilityForecast)> {
    if vector.dims() != &model.dims {
        return Err(Error::Config(
            "query vector comes from a different feature space than the model".into(),
        ));
    }
    let scores: Vec<f64> = model
        .classes
        .iter()
        .enumerate()
        .map(|(y, _)| {
            model.log_priors[y]
                + vector
                    .counts()
                    .iter()
                    .zip(&model.log_theta[y])
                    .map(|(&c, &lt)| c * lt)
                    .sum::<f64>()
        })
        .collect();
    let shift = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnormalized: Vec<f64> = scores.iter().map(|s| (s - shift).exp()).collect();
    let total: f64 = unnormalized.iter().sum();
    let p: BTreeMap<String, f64> = model
        .classes
        .iter()
        .zip(&unnormalized)
        .map(|(c, &u)| (c.clone(), u / total))
        .collect();
    let forecast = ProbabilityForecast::new(p)?;
    let mut best = &model.classes[0];
    for class in &model.classes[1..] {
        if forecast.prob(class) > forecast.prob(best) {
            best = class;
        }
    }
    Ok((best.clone(), forecast))
}

/// One classified example: the truth, the call, and the full forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub true_label: String,
    pub predicted_label: String,
    pub forecast: ProbabilityForecast,
}

/// Writes predictions as CSV: `id, true_label, predicted_label`, then one
/// probability column per vocabulary label, in vocabulary order.
pub fn write_predictions(
    path: &Path,
    predictions: &[Prediction],
    vocabulary: &[String],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec![
        "id".to_string(),
        "true_label".into(),
        "predicted_label".into(),
    ];
    header.extend(vocabulary.iter().cloned());
    writer
        .write_record(&header)
        .map_err(|e| csv_error(path, e))?;
    for prediction in predictions {
        let mut record = vec![
            prediction.id.clone(),
            prediction.true_label.clone(),
            prediction.predicted_label.clone(),
        ];
        for label in vocabulary {
            record.push(format_float(prediction.forecast.prob(label)));
        }
        writer
            .write_record(&record)
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Reads a predictions file back, returning the rows and the vocabulary
/// recovered from the header.
pub fn read_predictions(path: &Path) -> Result<(Vec<Prediction>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::format(path, "empty predictions file"))?
        .map_err(|e| csv_error(path, e))?;
    if header.len() < 4
        || &header[0] != "id"
        || &header[1] != "true_label"
        || &header[2] != "predicted_label"
    {
        return Err(Error::format(
            path,
            "header must be id, true_label, predicted_label, then one column per label",
        ));
    }
    let vocabulary: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    let mut predictions = Vec::new();
    for (i, record) in records.enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != 3 + vocabulary.len() {
            return Err(Error::format(
                path,
                format!(
                    "row {}: expected {} cells, got {}",
                    i + 2,
                    3 + vocabulary.len(),
                    record.len()
                ),
            ));
        }
        let mut p = BTreeMap::new();
        for (label, cell) in vocabulary.iter().zip(record.iter().skip(3)) {
            let value: f64 = cell.parse().map_err(|_| {
                Error::format(path, format!("row {}: invalid probability `{cell}`", i + 2))
            })?;
            p.insert(label.clone(), value);
        }
        let forecast = ProbabilityForecast::new(p)
            .map_err(|e| Error::format(path, format!("row {}: {e}", i + 2)))?;
        predictions.push(Prediction {
            id: record[0].to_string(),
            true_label: record[1].to_string(),
            predicted_label: record[2].to_string(),
            forecast,
        });
    }
    Ok((predictions, vocabulary))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}
