//! Tell two random-text generators apart with K-NN over compression
//! distance, no features extracted anywhere.
//!
//!     cargo run --release --example classify_sources
//!
//! Two order-1 Markov chains with different transition tables each emit 100
//! training and 100 test sequences. For every test sequence we rank the
//! training set by distance and take the majority label of the 10 nearest.

use usm_knn::classify::{knn_neighbors, knn_predict, UsmSource};
use usm_knn::metric::ComplexityCache;
use usm_knn::synth::two_source_corpus;
use usm_knn::Result;

fn main() -> Result<()> {
    // 200 walks per source from one seed; the first 100 of each class
    // train, the remaining 100 are queries. Same chains, disjoint walks.
    let store = two_source_corpus(11, 200, 1024)?;
    let is_train = |id: &str| {
        let index: usize = id.rsplit('-').next().unwrap().parse().unwrap();
        index < 100
    };
    let train_ids: Vec<String> = store.ids().into_iter().filter(|id| is_train(id)).collect();
    println!(
        "{} training walks, {} test walks, labels {:?}",
        train_ids.len(),
        store.len() - train_ids.len(),
        store.vocabulary()
    );

    let cache = ComplexityCache::new(Default::default());
    let source = UsmSource {
        store: &store,
        cache: &cache,
    };
    let vocabulary = store.vocabulary().to_vec();

    let mut correct = 0usize;
    let mut scored = 0usize;
    for item in store.items().iter().filter(|i| !is_train(&i.id)) {
        let neighbors = knn_neighbors(&source, &train_ids, &item.id, 10)?;
        let (predicted, forecast) = knn_predict(&neighbors, &store, &vocabulary, 0.01)?;
        scored += 1;
        if predicted == item.label {
            correct += 1;
        } else {
            println!(
                "  miss: {} predicted {predicted} (forecast {:.2})",
                item.id,
                forecast.prob(&predicted)
            );
        }
    }
    let accuracy = correct as f64 / scored as f64;
    println!("accuracy {accuracy:.3} ({correct}/{scored})");
    Ok(())
}
