//! Build the full pairwise distance matrix for a generated corpus, persist
//! it, and rebuild it from a warm complexity cache.
//!
//!     cargo run --release --example distance_matrix [OUT_DIR]
//!
//! The second build reloads the per-sequence compressed sizes written by the
//! first and must produce byte-identical CSV output; that equality is what
//! makes cached long runs trustworthy.

use std::env;
use std::fs;
use std::path::PathBuf;

use usm_knn::metric::{
    build_distance_matrix, load_cache_rows, persist_cache, persist_matrix, triangle_report,
    ComplexityCache, MatrixConfig,
};
use usm_knn::synth::mixed_corpus;
use usm_knn::Result;

fn main() -> Result<()> {
    let out = env::args()
        .nth(1)
        .map_or_else(|| env::temp_dir().join("usmknn-matrix"), PathBuf::from);
    fs::create_dir_all(&out).map_err(|e| usm_knn::Error::io(&out, e))?;

    let dataset = mixed_corpus(1)?;
    println!(
        "corpus: {} sequences, labels {:?}",
        dataset.len(),
        dataset.vocabulary()
    );

    let cache = ComplexityCache::new(Default::default());
    let matrix = build_distance_matrix(&dataset, &cache, &MatrixConfig::default())?;
    let ids = matrix.ids();
    let mut max = 0.0f64;
    let mut max_pair = (ids[0].clone(), ids[0].clone());
    for a in ids {
        for b in ids {
            let d = matrix.distance(a, b)?;
            if d > max {
                max = d;
                max_pair = (a.clone(), b.clone());
            }
        }
    }
    println!(
        "largest distance {max:.4} between {} and {}",
        max_pair.0, max_pair.1
    );

    let triangles = triangle_report(&matrix);
    println!(
        "triangle inequality: {} of {} triples violated (worst excess {:.4})",
        triangles.violations, triangles.triples, triangles.max_excess
    );

    let matrix_path = out.join("matrix.csv");
    let cache_path = out.join("complexities.tsv");
    persist_matrix(&matrix, &matrix_path)?;
    persist_cache(&cache, &cache_path)?;
    println!("wrote {}", matrix_path.display());

    // Second build: preload every single-sequence complexity, recompute the
    // pair concatenations, and demand the same bytes.
    let warm = ComplexityCache::new(Default::default());
    for (id, raw_length, compressed) in load_cache_rows(&cache_path)? {
        warm.preload_single(&id, raw_length, compressed);
    }
    let rebuilt = build_distance_matrix(&dataset, &warm, &MatrixConfig::default())?;
    let rebuilt_path = out.join("matrix-rebuilt.csv");
    persist_matrix(&rebuilt, &rebuilt_path)?;
    let identical = fs::read(&matrix_path).unwrap() == fs::read(&rebuilt_path).unwrap();
    println!("warm-cache rebuild byte-identical: {identical}");
    Ok(())
}
