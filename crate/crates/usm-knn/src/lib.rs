//! K-nearest-neighbour learning over variable-length byte sequences, using a
//! similarity metric approximated by loss-less compression.
//!
//! The distance between two sequences `x` and `y` is
//!
//! ```text
//! d(x, y) = max{ C(x|y), C(y|x) } / max{ C(x), C(y) }
//! ```
//!
//! where `C(x)` is the compressed size of `x` and `C(x|y)` is estimated as
//! `C(x ‖ y) - C(y)` (concatenate, compress, subtract). No feature
//! engineering is involved: raw bytes go in, a normalized distance in
//! roughly `[0, 1]` comes out, and the same code classifies e-mail messages
//! and protein sequences.
//!
//! The crate provides:
//!
//! - [`compressor`]: deterministic raw-DEFLATE sizing used as the
//!   complexity estimate;
//! - [`metric`]: the normalized distance, a write-once complexity cache,
//!   and symmetric distance matrices with CSV persistence;
//! - [`dataset`]: loaders for labelled directory trees, FASTA files and
//!   TSV corpora, plus cross-validation fold assignment;
//! - [`classify`]: K-NN over any distance source, probability forecasts,
//!   frequency-vector baselines and a multinomial Naive Bayes baseline;
//! - [`evaluate`]: confusion matrices, spam recall/precision, Brier and
//!   log loss, reliability-curve bins and the cross-validation driver;
//! - [`cli`]: the batch commands behind the `usmknn` binary (distance
//!   matrices, cross-validation runs, reliability plots, report replay);
//! - [`synth`]: seeded sequence generators used by the examples and the
//!   test suite.
//!
//! Start with the runnable programs under `examples/`; each one exercises a
//! single capability end to end.

pub mod classify;
pub mod cli;
pub mod compressor;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod metric;
pub mod synth;

pub use error::{Error, Result};
