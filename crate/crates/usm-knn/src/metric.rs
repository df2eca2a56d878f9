//! The normalized compression distance between sequences, with caching and
//! full pairwise matrices.
//!
//! For sequences `x`, `y` with compressed sizes `C(·)`, the conditional
//! complexity of `x` given `y` is estimated as `C(x ‖ y) - C(y)` and the
//! distance is
//!
//! ```text
//! d(x, y) = max{ Ĉ(x|y), Ĉ(y|x) } / max{ C(x), C(y) }
//! ```
//!
//! Both concatenation orders are computed literally (they differ by a few
//! bytes in practice), the numerator and denominator are symmetric by
//! construction, and negative conditional estimates (possible when codec
//! overhead dominates) clamp to zero since a conditional complexity cannot
//! be negative. The ideal metric lives in `[0, 1]`; the compression
//! approximation can slightly exceed 1, so the accepted range is
//! `[0, 1 + RANGE_EPSILON]`.
//!
//! Every compressed size is memoized in a [`ComplexityCache`]: entries are
//! write-once values of a pure function, so concurrent matrix construction
//! is deterministic no matter how pairs are scheduled.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};

use dashmap::DashMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compressor::{compressed_size, concat_size, CompressorConfig};
use crate::dataset::{Dataset, PayloadSource};
use crate::error::{Error, Result};

/// Tolerated excess of the compression approximation over the ideal upper
/// bound of 1.
pub const RANGE_EPSILON: f64 = 0.1;

/// Largest distance accepted by matrix validation.
pub const MAX_DISTANCE: f64 = 1.0 + RANGE_EPSILON;

/// Above this many sequences the pair cache defaults to off: the singles
/// cache is linear, but pair entries grow quadratically.
pub const PAIR_CACHE_AUTO_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy)]
struct SingleEntry {
    raw_length: usize,
    compressed: usize,
}

/// Memoized compressed sizes: `C(x)` per sequence id, and optionally
/// `C(x ‖ y)` per unordered id pair (both concatenation orders live in one
/// entry).
///
/// Entries are write-once: a recomputation must reproduce the stored value
/// exactly, which holds because compression is a pure function of
/// `(config, payload)`. Inserts are concurrent-safe and idempotent.
pub struct ComplexityCache {
    config: CompressorConfig,
    singles: DashMap<String, SingleEntry>,
    pairs: DashMap<(String, String), (usize, usize)>,
    store_pairs: AtomicBool,
    negative_clamps: AtomicU64,
}

impl ComplexityCache {
    /// Cache with pair caching disabled (singles are always cached).
    pub fn new(config: CompressorConfig) -> Self {
        ComplexityCache {
            config,
            singles: DashMap::new(),
            pairs: DashMap::new(),
            store_pairs: AtomicBool::new(false),
            negative_clamps: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &CompressorConfig {
        &self.config
    }

    /// Enables or disables storing of pair entries. Already stored entries
    /// are kept and remain valid either way.
    pub fn set_pair_caching(&self, enabled: bool) {
        self.store_pairs.store(enabled, Ordering::Relaxed);
    }

    pub fn pair_caching(&self) -> bool {
        self.store_pairs.load(Ordering::Relaxed)
    }

    /// Memoized `C(payload)`.
    pub fn single(&self, id: &str, payload: &[u8]) -> usize {
        if let Some(entry) = self.singles.get(id) {
            debug_assert_eq!(
                entry.raw_length,
                payload.len(),
                "cache entry for `{id}` does not match its payload"
            );
            return entry.compressed;
        }
        if payload.len() > self.config.window_note() {
            log::warn!(
                "sequence `{id}` is {} bytes, longer than the {}-byte dictionary window of {}; \
                 redundancy beyond the window is invisible to the size estimate",
                payload.len(),
                self.config.window_note(),
                self.config.scheme()
            );
        }
        let compressed = compressed_size(payload, &self.config);
        let entry = self.singles.entry(id.to_string()).or_insert(SingleEntry {
            raw_length: payload.len(),
            compressed,
        });
        assert_eq!(
            entry.compressed, compressed,
            "compressed size of `{id}` changed between computations"
        );
        entry.compressed
    }

    /// Memoized `C(x ‖ y)` in the requested order. When pair caching is on,
    /// both orders are computed and stored under the unordered key.
    pub fn concat(&self, x: (&str, &[u8]), y: (&str, &[u8])) -> usize {
        let (first, second) = if x.0 <= y.0 { (x, y) } else { (y, x) };
        let key = (first.0.to_string(), second.0.to_string());
        if let Some(entry) = self.pairs.get(&key) {
            return if x.0 == first.0 { entry.0 } else { entry.1 };
        }
        if !self.pair_caching() {
            return concat_size(x.1, y.1, &self.config);
        }
        let fwd = concat_size(first.1, second.1, &self.config);
        let bwd = if first.0 == second.0 {
            fwd
        } else {
            concat_size(second.1, first.1, &self.config)
        };
        let entry = self.pairs.entry(key).or_insert((fwd, bwd));
        let stored = *entry;
        assert_eq!(
            stored,
            (fwd, bwd),
            "concat size changed between computations"
        );
        if x.0 == first.0 {
            stored.0
        } else {
            stored.1
        }
    }

    /// Number of cached single entries.
    pub fn singles_len(&self) -> usize {
        self.singles.len()
    }

    /// Number of cached unordered pair entries.
    pub fn pairs_len(&self) -> usize {
        self.pairs.len()
    }

    /// How often a conditional complexity estimate came out negative and
    /// was clamped to zero.
    pub fn negative_clamp_count(&self) -> u64 {
        self.negative_clamps.load(Ordering::Relaxed)
    }

    /// `(id, raw_length, compressed_size)` rows sorted by id.
    pub fn singles_snapshot(&self) -> Vec<(String, usize, usize)> {
        let mut rows: Vec<(String, usize, usize)> = self
            .singles
            .iter()
            .map(|e| (e.key().clone(), e.raw_length, e.compressed))
            .collect();
        rows.sort();
        rows
    }

    /// Seeds the singles cache with already known sizes (e.g. from a cache
    /// file written by an earlier run). The caller is responsible for only
    /// feeding entries whose id still refers to the same payload.
    pub fn preload_single(&self, id: &str, raw_length: usize, compressed: usize) {
        self.singles.entry(id.to_string()).or_insert(SingleEntry {
            raw_length,
            compressed,
        });
    }
}

/// Clamped conditional complexity estimate `Ĉ(x|y) = max(0, C(x‖y) - C(y))`.
///
/// Concatenation is x-then-y; subtracting `C(y)` turns the joint complexity
/// into a conditional one. Negative estimates clamp to zero and bump a
/// diagnostic counter on the cache.
pub fn conditional_complexity(
    store: &(impl PayloadSource + ?Sized),
    x: &str,
    y: &str,
    cache: &ComplexityCache,
) -> Result<usize> {
    let px = store.payload(x)?;
    let py = store.payload(y)?;
    let joint = cache.concat((x, px), (y, py)) as i64;
    let cy = cache.single(y, py) as i64;
    let estimate = joint - cy;
    if estimate < 0 {
        cache.negative_clamps.fetch_add(1, Ordering::Relaxed);
        return Ok(0);
    }
    Ok(estimate as usize)
}

/// Normalized compression distance between the sequences behind two ids.
///
/// Symmetric by construction and usually within `[0, 1]`; realistic inputs
/// stay below [`MAX_DISTANCE`]. The distance of two empty sequences is
/// undefined (the denominator would be pure codec overhead).
pub fn usm_distance(
    store: &(impl PayloadSource + ?Sized),
    x: &str,
    y: &str,
    cache: &ComplexityCache,
) -> Result<f64> {
    let px = store.payload(x)?;
    let py = store.payload(y)?;
    if px.is_empty() && py.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "distance of two empty sequences (`{x}`, `{y}`)"
        )));
    }
    let cx = cache.single(x, px);
    let cy = cache.single(y, py);
    let x_given_y = conditional_complexity(store, x, y, cache)?;
    let y_given_x = conditional_complexity(store, y, x, cache)?;
    Ok(x_given_y.max(y_given_x) as f64 / cx.max(cy) as f64)
}

/// Whether the matrix builder stores pair entries in the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairCachePolicy {
    /// On for up to [`PAIR_CACHE_AUTO_LIMIT`] sequences, off above.
    #[default]
    Auto,
    On,
    Off,
}

/// Configuration for [`build_distance_matrix`].
#[derive(Debug, Clone, Copy)]
pub struct MatrixConfig {
    pub pair_cache: PairCachePolicy,
    /// Compute pairwise distances on the rayon pool. The result is
    /// identical either way; this only trades memory locality for cores.
    pub parallel: bool,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            pair_cache: PairCachePolicy::Auto,
            parallel: true,
        }
    }
}

/// Symmetric matrix of pairwise distances over a dataset.
///
/// The diagonal holds the genuinely computed self-distance (small but
/// nonzero); consumers that need "everything but me" must exclude by id,
/// not by assuming a zero diagonal.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f64>, // n*n, row-major
}

impl DistanceMatrix {
    fn from_parts(ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        assert_eq!(values.len(), ids.len() * ids.len());
        let mut index = HashMap::with_capacity(ids.len());
        for (pos, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), pos).is_some() {
                return Err(Error::Data(format!(
                    "duplicate id `{id}` in distance matrix"
                )));
            }
        }
        Ok(DistanceMatrix { ids, index, values })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    pub fn distance(&self, a: &str, b: &str) -> Result<f64> {
        let i = *self
            .index
            .get(a)
            .ok_or_else(|| Error::UnknownId(a.to_string()))?;
        let j = *self
            .index
            .get(b)
            .ok_or_else(|| Error::UnknownId(b.to_string()))?;
        Ok(self.get(i, j))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }
}

/// Computes all `n(n+1)/2` unordered pairwise distances over a dataset,
/// including the diagonal self-distances.
///
/// The result is independent of computation order and of the degree of
/// parallelism: every cell is a pure function of the two payloads and the
/// compressor config. Errors are propagated with the offending pair named.
pub fn build_distance_matrix(
    dataset: &Dataset,
    cache: &ComplexityCache,
    config: &MatrixConfig,
) -> Result<DistanceMatrix> {
    let ids = dataset.ids();
    let n = ids.len();
    cache.set_pair_caching(match config.pair_cache {
        PairCachePolicy::Auto => n <= PAIR_CACHE_AUTO_LIMIT,
        PairCachePolicy::On => true,
        PairCachePolicy::Off => false,
    });

    // Warm the singles cache up front; this also surfaces the long-sequence
    // warning once per sequence rather than once per pair.
    for item in dataset.items() {
        cache.single(&item.id, &item.payload);
    }

    let total_pairs = n * (n + 1) / 2;
    let report_every = (total_pairs / 20).max(1);
    let done = AtomicUsize::new(0);

    let mut values = vec![0.0f64; n * n];
    let fill_row = |(i, row): (usize, &mut [f64])| -> Result<()> {
        for j in i..n {
            row[j] = usm_distance(dataset, &ids[i], &ids[j], cache)
                .map_err(|e| Error::Data(format!("pair (`{}`, `{}`): {e}", ids[i], ids[j])))?;
            let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
            if total_pairs > 10_000 && finished.is_multiple_of(report_every) {
                log::info!("distance matrix: {finished}/{total_pairs} pairs");
            }
        }
        Ok(())
    };
    if config.parallel {
        values
            .par_chunks_mut(n)
            .enumerate()
            .try_for_each(fill_row)?;
    } else {
        values.chunks_mut(n).enumerate().try_for_each(fill_row)?;
    }
    // Mirror the upper triangle; symmetry is bitwise because each pair is
    // computed exactly once.
    for i in 1..n {
        for j in 0..i {
            values[i * n + j] = values[j * n + i];
        }
    }
    DistanceMatrix::from_parts(ids, values)
}

/// Writes a matrix as CSV: header row and first column carry the ids, cell
/// values are printed with round-trip-exact precision.
pub fn persist_matrix(matrix: &DistanceMatrix, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = Vec::with_capacity(matrix.len() + 1);
    header.push("id".to_string());
    header.extend(matrix.ids().iter().cloned());
    writer
        .write_record(&header)
        .map_err(|e| csv_error(path, e))?;
    for (i, id) in matrix.ids().iter().enumerate() {
        let mut record = Vec::with_capacity(matrix.len() + 1);
        record.push(id.clone());
        for j in 0..matrix.len() {
            record.push(format_float(matrix.get(i, j)));
        }
        writer
            .write_record(&record)
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Shortest decimal representation that parses back to the identical f64.
pub(crate) fn format_float(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Loads a matrix written by [`persist_matrix`], validating that the row
/// and column ids agree, every value is within `[0, MAX_DISTANCE]`, and the
/// matrix is exactly symmetric.
pub fn load_matrix(path: &Path) -> Result<DistanceMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::format(path, "empty matrix file"))?
        .map_err(|e| csv_error(path, e))?;
    let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = ids.len();
    if n == 0 {
        return Err(Error::format(path, "matrix file has no ids"));
    }
    let mut values = vec![0.0f64; n * n];
    let mut rows_seen = 0usize;
    for (i, record) in records.enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if i >= n {
            return Err(Error::format(path, format!("more than {n} data rows")));
        }
        if record.len() != n + 1 {
            return Err(Error::format(
                path,
                format!(
                    "row {}: expected {} cells, got {}",
                    i + 2,
                    n + 1,
                    record.len()
                ),
            ));
        }
        let row_id = &record[0];
        if row_id != ids[i] {
            return Err(Error::format(
                path,
                format!(
                    "row {} id `{row_id}` does not match column id `{}`",
                    i + 2,
                    ids[i]
                ),
            ));
        }
        for j in 0..n {
            let cell = &record[j + 1];
            let v: f64 = cell.parse().map_err(|_| {
                Error::format(
                    path,
                    format!("row {}, column {}: invalid number `{cell}`", i + 2, j + 2),
                )
            })?;
            if !v.is_finite() || !(0.0..=MAX_DISTANCE).contains(&v) {
                return Err(Error::format(
                    path,
                    format!(
                        "value {v} at ({}, {}) outside [0, {MAX_DISTANCE}]",
                        ids[i], ids[j]
                    ),
                ));
            }
            values[i * n + j] = v;
        }
        rows_seen += 1;
    }
    if rows_seen != n {
        return Err(Error::format(
            path,
            format!("expected {n} data rows, found {rows_seen}"),
        ));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if values[i * n + j] != values[j * n + i] {
                return Err(Error::format(
                    path,
                    format!(
                        "asymmetry at ({}, {}): {} vs {}",
                        ids[i],
                        ids[j],
                        values[i * n + j],
                        values[j * n + i]
                    ),
                ));
            }
        }
    }
    DistanceMatrix::from_parts(ids, values)
}

/// Writes the singles cache as TSV with columns id, raw_length,
/// compressed_size.
pub fn persist_cache(cache: &ComplexityCache, path: &Path) -> Result<()> {
    let mut out = String::from("id\traw_length\tcompressed_size\n");
    for (id, raw_length, compressed) in cache.singles_snapshot() {
        out.push_str(&format!("{id}\t{raw_length}\t{compressed}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads rows written by [`persist_cache`].
pub fn load_cache_rows(path: &Path) -> Result<Vec<(String, usize, usize)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line != "id\traw_length\tcompressed_size" {
                return Err(Error::format(path, "missing cache header"));
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::format(
                path,
                format!("line {}: expected 3 fields", lineno + 1),
            ));
        }
        let raw_length: usize = fields[1]
            .parse()
            .map_err(|_| Error::format(path, format!("line {}: bad raw_length", lineno + 1)))?;
        let compressed: usize = fields[2].parse().map_err(|_| {
            Error::format(path, format!("line {}: bad compressed_size", lineno + 1))
        })?;
        if compressed == 0 {
            return Err(Error::format(
                path,
                format!("line {}: compressed size must be positive", lineno + 1),
            ));
        }
        rows.push((fields[0].to_string(), raw_length, compressed));
    }
    Ok(rows)
}

/// Triangle-inequality audit over a full matrix: the ideal metric satisfies
/// `d(i,k) ≤ d(i,j) + d(j,k)` only up to additive error, so violations are
/// counted and reported rather than asserted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriangleReport {
    pub triples: usize,
    pub violations: usize,
    pub max_excess: f64,
}

impl TriangleReport {
    pub fn violation_rate(&self) -> f64 {
        if self.triples == 0 {
            0.0
        } else {
            self.violations as f64 / self.triples as f64
        }
    }
}

pub fn triangle_report(matrix: &DistanceMatrix) -> TriangleReport {
    let n = matrix.len();
    let mut report = TriangleReport {
        triples: 0,
        violations: 0,
        max_excess: 0.0,
    };
    for i in 0..n {
        for k in (i + 1)..n {
            let direct = matrix.get(i, k);
            for j in 0..n {
                if j == i || j == k {
                    continue;
                }
                report.triples += 1;
                let excess = direct - (matrix.get(i, j) + matrix.get(j, k));
                if excess > 0.0 {
                    report.violations += 1;
                    if excess > report.max_excess {
                        report.max_excess = excess;
                    }
                }
            }
        }
    }
    report
}
