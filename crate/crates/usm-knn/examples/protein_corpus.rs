//! Classify protein subcellular location from a FASTA file you supply,
//! comparing raw-sequence compression distance against the amino-acid
//! composition baselines.
//!
//!     cargo run --release --example protein_corpus -- FILE.fasta [K]
//!
//! Each record's label is read from the second whitespace-separated header
//! token (`>P12345 NUCL ...`). The split is stratified 10-fold; the USM
//! learner uses K neighbours (default 30) and the baselines use 20-d
//! composition vectors. On a corpus of a few thousand proteins the USM pass
//! is millions of pair compressions; the baselines finish in seconds, which
//! is exactly the trade the comparison is about.

use std::env;
use std::path::PathBuf;
use std::process::exit;

use usm_knn::dataset::{load_fasta, stratified_kfold, HeaderLabelRule};
use usm_knn::evaluate::{cross_validate, CvOptions, FeatureConfig, MethodConfig};

fn main() {
    let mut args = env::args().skip(1);
    let Some(path) = args.next().map(PathBuf::from) else {
        eprintln!("usage: protein_corpus FILE.fasta [K]");
        exit(2);
    };
    let k: usize = args
        .next()
        .map(|raw| raw.parse().expect("K must be a positive integer"))
        .unwrap_or(30);

    let dataset = match load_fasta(&path, &HeaderLabelRule::default()) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.exit_code());
        }
    };
    println!(
        "{} proteins, {} classes: {:?}",
        dataset.len(),
        dataset.vocabulary().len(),
        dataset.vocabulary()
    );

    let folds = stratified_kfold(&dataset, 10, 1).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit(e.exit_code());
    });
    let methods = [
        MethodConfig::FreqKnn {
            k,
            alpha: 0.01,
            features: FeatureConfig::AminoChars,
        },
        MethodConfig::NaiveBayes {
            smoothing: 1.0,
            features: FeatureConfig::AminoChars,
        },
        MethodConfig::UsmKnn {
            k,
            alpha: 0.01,
            strict_per_fold: false,
        },
    ];

    for method in &methods {
        let options = CvOptions {
            seed: Some(1),
            ..CvOptions::default()
        };
        match cross_validate(&dataset, &folds, method, &options) {
            Ok((_, report)) => {
                println!(
                    "{:<12} accuracy {:.4}",
                    method.name(),
                    report.overall_accuracy
                );
                for (label, accuracy) in &report.per_class_accuracy {
                    println!("    {label:<8} {accuracy:.4}");
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit(e.exit_code());
            }
        }
    }
}
