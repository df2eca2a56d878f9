//! Labeled sequence corpora and cross-validation fold assignment.
//!
//! Three loaders cover the corpus formats used in practice: directory trees
//! of plain files (one class-bearing filename rule per file, subdirectories
//! acting as predefined folds), FASTA files with the class in the record
//! header, and a generic `id TAB label TAB sequence` format. Payloads are
//! always the raw bytes as distributed; no decoding or normalization is
//! applied, because the learner works on bytes.
//!
//! File-system enumeration is sorted lexicographically before ids are
//! assigned, so two runs over the same tree produce identical datasets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One raw byte sequence with identity, class label and provenance.
#[derive(Debug, Clone)]
pub struct LabeledSequence {
    /// Unique within a dataset.
    pub id: String,
    /// Class label; must appear in the dataset vocabulary.
    pub label: String,
    /// Raw bytes, never empty.
    pub payload: Vec<u8>,
    /// Where the sequence came from (file path or generator description).
    pub origin: String,
    /// Fold index implied by the source structure (e.g. `part3/` in a
    /// Ling-Spam style tree), if any.
    pub fold_hint: Option<usize>,
}

/// Read access to sequence payloads by id.
///
/// [`Dataset`] is the usual implementation; tests may substitute minimal
/// stores.
pub trait PayloadSource {
    fn payload(&self, id: &str) -> Result<&[u8]>;
}

/// An ordered collection of labeled sequences plus its class vocabulary.
///
/// The vocabulary is the lexicographically sorted list of distinct labels.
/// That order is load-order independent and defines every downstream
/// tie-break (prediction ties, report column order).
#[derive(Debug, Clone)]
pub struct Dataset {
    items: Vec<LabeledSequence>,
    vocabulary: Vec<String>,
    index: HashMap<String, usize>,
}

impl Dataset {
    /// Validates ids unique and payloads non-empty, derives the vocabulary.
    pub fn new(items: Vec<LabeledSequence>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Data("dataset contains no sequences".to_string()));
        }
        let mut index = HashMap::with_capacity(items.len());
        let mut labels = BTreeSet::new();
        for (pos, item) in items.iter().enumerate() {
            if item.payload.is_empty() {
                return Err(Error::Data(format!(
                    "sequence `{}` has empty payload",
                    item.id
                )));
            }
            if index.insert(item.id.clone(), pos).is_some() {
                return Err(Error::Data(format!("duplicate sequence id `{}`", item.id)));
            }
            labels.insert(item.label.clone());
        }
        Ok(Dataset {
            vocabulary: labels.into_iter().collect(),
            items,
            index,
        })
    }

    pub fn items(&self) -> &[LabeledSequence] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Distinct labels in lexicographic order.
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn get(&self, id: &str) -> Option<&LabeledSequence> {
        self.index.get(id).map(|&pos| &self.items[pos])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn label_of(&self, id: &str) -> Result<&str> {
        self.get(id)
            .map(|item| item.label.as_str())
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    /// All ids in dataset order.
    pub fn ids(&self) -> Vec<String> {
        self.items.iter().map(|item| item.id.clone()).collect()
    }
}

impl PayloadSource for Dataset {
    fn payload(&self, id: &str) -> Result<&[u8]> {
        self.get(id)
            .map(|item| item.payload.as_slice())
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }
}

/// Maps filenames to class labels.
///
/// Prefix rules are tried in order; a file matching none falls back to
/// `fallback`, and if that is absent too the load fails naming the file.
/// The default reproduces the spam-corpus convention: filenames starting
/// with `spmsg` are spam, everything else is legitimate mail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRule {
    pub prefixes: Vec<(String, String)>,
    pub fallback: Option<String>,
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule {
            prefixes: vec![("spmsg".to_string(), "spam".to_string())],
            fallback: Some("legit".to_string()),
        }
    }
}

impl LabelRule {
    pub fn label_for(&self, filename: &str) -> Option<&str> {
        for (prefix, label) in &self.prefixes {
            if filename.starts_with(prefix.as_str()) {
                return Some(label);
            }
        }
        self.fallback.as_deref()
    }
}

fn sorted_dir_entries(dir: &Path) -> Result<Vec<fs::DirEntry>> {
    let mut entries: Vec<fs::DirEntry> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

/// Loads a directory tree of plain files: every first-level subdirectory is
/// one predefined fold, every regular file inside is one sequence whose
/// payload is the raw file bytes.
pub fn load_labeled_dirs(root: &Path, rule: &LabelRule) -> Result<Dataset> {
    let mut items = Vec::new();
    let mut fold = 0usize;
    for entry in sorted_dir_entries(root)? {
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let dir_name = entry.file_name().to_string_lossy().into_owned();
        for file in sorted_dir_entries(&path)? {
            let file_path = file.path();
            if !file_path.is_file() {
                continue;
            }
            let file_name = file.file_name().to_string_lossy().into_owned();
            let label = rule
                .label_for(&file_name)
                .ok_or_else(|| Error::format(&file_path, "filename matches no label rule"))?
                .to_string();
            let payload = fs::read(&file_path).map_err(|e| Error::io(&file_path, e))?;
            if payload.is_empty() {
                return Err(Error::format(&file_path, "file is empty"));
            }
            items.push(LabeledSequence {
                id: format!("{dir_name}/{file_name}"),
                label,
                payload,
                origin: file_path.to_string_lossy().into_owned(),
                fold_hint: Some(fold),
            });
        }
        fold += 1;
    }
    if items.is_empty() {
        return Err(Error::format(root, "no files found under directory tree"));
    }
    Dataset::new(items)
}

/// How to pull the class label out of a FASTA header.
///
/// The header is split on whitespace, `>` stripped; token 0 is the record
/// id. The default takes token 1 as the label, matching headers of the form
/// `>P12345 NUCL`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderLabelRule {
    pub token: usize,
}

impl Default for HeaderLabelRule {
    fn default() -> Self {
        HeaderLabelRule { token: 1 }
    }
}

/// The twenty amino-acid letters; anything else in a FASTA sequence is
/// tolerated (bytes are bytes) but reported, since the composition baseline
/// ignores it.
pub const AMINO_ACIDS: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";

/// Loads a FASTA file: one sequence per record, payload the concatenated
/// sequence letters (uppercased, whitespace stripped), label extracted from
/// the header per `rule`.
pub fn load_fasta(path: &Path, rule: &HeaderLabelRule) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut items: Vec<LabeledSequence> = Vec::new();
    let mut header: Option<String> = None;
    let mut seq: Vec<u8> = Vec::new();
    let mut nonstandard_records = 0usize;

    let mut flush = |header: &Option<String>, seq: &mut Vec<u8>| -> Result<()> {
        let Some(header) = header else { return Ok(()) };
        let tokens: Vec<&str> = header.split_whitespace().collect();
        let id = tokens
            .first()
            .copied()
            .filter(|t| !t.is_empty())
            .ok_or_else(|| Error::format(path, "FASTA header with no record id"))?;
        let label = tokens.get(rule.token).copied().ok_or_else(|| {
            Error::format(
                path,
                format!(
                    "header of record `{id}` has no label token at position {}",
                    rule.token
                ),
            )
        })?;
        if seq.is_empty() {
            return Err(Error::format(
                path,
                format!("record `{id}` has empty sequence"),
            ));
        }
        if seq.iter().any(|b| !AMINO_ACIDS.contains(b)) {
            nonstandard_records += 1;
        }
        items.push(LabeledSequence {
            id: id.to_string(),
            label: label.to_string(),
            payload: std::mem::take(seq),
            origin: path.to_string_lossy().into_owned(),
            fold_hint: None,
        });
        Ok(())
    };

    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('>') {
            flush(&header, &mut seq)?;
            header = Some(rest.to_string());
        } else {
            if header.is_none() && !line.trim().is_empty() {
                return Err(Error::format(
                    path,
                    "sequence data before first FASTA header",
                ));
            }
            seq.extend(
                line.bytes()
                    .filter(|b| !b.is_ascii_whitespace())
                    .map(|b| b.to_ascii_uppercase()),
            );
        }
    }
    flush(&header, &mut seq)?;

    if nonstandard_records > 0 {
        log::warn!(
            "{}: {nonstandard_records} record(s) contain letters outside the 20-letter \
             amino-acid alphabet; the composition baseline will ignore those symbols",
            path.display()
        );
    }
    if items.is_empty() {
        return Err(Error::format(path, "no FASTA records found"));
    }
    Dataset::new(items).map_err(|e| match e {
        Error::Data(msg) => Error::format(path, msg),
        other => other,
    })
}

/// Loads `id TAB label TAB sequence` rows, one sequence per line.
pub fn load_delimited(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::format(
                path,
                format!(
                    "line {}: expected 3 tab-separated fields, got {}",
                    lineno + 1,
                    fields.len()
                ),
            ));
        }
        if fields[2].is_empty() {
            return Err(Error::format(
                path,
                format!("line {}: empty sequence field", lineno + 1),
            ));
        }
        items.push(LabeledSequence {
            id: fields[0].to_string(),
            label: fields[1].to_string(),
            payload: fields[2].as_bytes().to_vec(),
            origin: format!("{}:{}", path.display(), lineno + 1),
            fold_hint: None,
        });
    }
    if items.is_empty() {
        return Err(Error::format(path, "no rows found"));
    }
    Dataset::new(items).map_err(|e| match e {
        Error::Data(msg) => Error::format(path, msg),
        other => other,
    })
}

/// Assignment of every dataset id to one of `fold_count` folds.
#[derive(Debug, Clone)]
pub struct FoldAssignment {
    folds: HashMap<String, usize>,
    fold_count: usize,
}

impl FoldAssignment {
    fn new(folds: HashMap<String, usize>, fold_count: usize) -> Result<Self> {
        let mut seen = vec![0usize; fold_count];
        for &f in folds.values() {
            if f >= fold_count {
                return Err(Error::Data(format!(
                    "fold index {f} out of range for {fold_count} folds"
                )));
            }
            seen[f] += 1;
        }
        if let Some(empty) = seen.iter().position(|&n| n == 0) {
            return Err(Error::Data(format!("fold {empty} is empty")));
        }
        Ok(FoldAssignment { folds, fold_count })
    }

    pub fn fold_count(&self) -> usize {
        self.fold_count
    }

    pub fn fold_of(&self, id: &str) -> Result<usize> {
        self.folds
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.folds.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }
}

/// Uses the fold structure the corpus came with (one fold per
/// subdirectory). Fails if any sequence lacks a hint or fewer than two
/// distinct folds exist.
pub fn predefined_folds(dataset: &Dataset) -> Result<FoldAssignment> {
    let mut hints = BTreeSet::new();
    for item in dataset.items() {
        match item.fold_hint {
            Some(h) => {
                hints.insert(h);
            }
            None => {
                return Err(Error::Data(format!(
                    "sequence `{}` has no predefined fold hint",
                    item.id
                )))
            }
        }
    }
    if hints.len() < 2 {
        return Err(Error::Data(format!(
            "cross-validation needs at least 2 folds, corpus provides {}",
            hints.len()
        )));
    }
    let renumber: BTreeMap<usize, usize> = hints.iter().enumerate().map(|(i, &h)| (h, i)).collect();
    let folds = dataset
        .items()
        .iter()
        .map(|item| (item.id.clone(), renumber[&item.fold_hint.unwrap()]))
        .collect();
    FoldAssignment::new(folds, renumber.len())
}

/// Seeded random fold assignment that keeps per-fold class proportions
/// within one item of the global proportions: items of each class are
/// shuffled, then dealt round-robin over the folds.
///
/// If some class has fewer than `f` members the stratification guarantee is
/// unattainable; the assignment degrades to a plain seeded shuffle over all
/// items with a warning.
pub fn stratified_kfold(dataset: &Dataset, f: usize, seed: u64) -> Result<FoldAssignment> {
    check_fold_request(dataset, f)?;
    let mut per_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for item in dataset.items() {
        per_class.entry(&item.label).or_default().push(&item.id);
    }
    if per_class.values().any(|ids| ids.len() < f) {
        log::warn!(
            "a class has fewer than {f} members; falling back to plain random fold assignment"
        );
        return random_kfold(dataset, f, seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = HashMap::with_capacity(dataset.len());
    for ids in per_class.values_mut() {
        ids.shuffle(&mut rng);
        for (pos, id) in ids.iter().enumerate() {
            folds.insert(id.to_string(), pos % f);
        }
    }
    FoldAssignment::new(folds, f)
}

/// Plain seeded random fold assignment (no stratification).
pub fn random_kfold(dataset: &Dataset, f: usize, seed: u64) -> Result<FoldAssignment> {
    check_fold_request(dataset, f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<&str> = dataset
        .items()
        .iter()
        .map(|item| item.id.as_str())
        .collect();
    ids.shuffle(&mut rng);
    let folds = ids
        .iter()
        .enumerate()
        .map(|(pos, id)| (id.to_string(), pos % f))
        .collect();
    FoldAssignment::new(folds, f)
}

fn check_fold_request(dataset: &Dataset, f: usize) -> Result<()> {
    if f < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 2 folds, requested {f}"
        )));
    }
    if dataset.len() < f {
        return Err(Error::Data(format!(
            "cannot split {} sequences into {f} non-empty folds",
            dataset.len()
        )));
    }
    Ok(())
}

/// Writes a JSON manifest of the dataset: id, label, byte length and, when
/// a fold assignment is given, the fold of every sequence.
pub fn write_manifest(
    dataset: &Dataset,
    folds: Option<&FoldAssignment>,
    path: &Path,
) -> Result<()> {
    #[derive(Serialize)]
    struct ManifestRow<'a> {
        id: &'a str,
        label: &'a str,
        bytes: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        fold: Option<usize>,
    }
    let rows: Vec<ManifestRow> = dataset
        .items()
        .iter()
        .map(|item| {
            Ok(ManifestRow {
                id: &item.id,
                label: &item.label,
                bytes: item.payload.len(),
                fold: folds.map(|fa| fa.fold_of(&item.id)).transpose()?,
            })
        })
        .collect::<Result<_>>()?;
    let json = serde_json::to_string_pretty(&rows)
        .map_err(|e| Error::Data(format!("manifest serialization failed: {e}")))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}
