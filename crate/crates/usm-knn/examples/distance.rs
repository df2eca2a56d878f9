//! The distance on its own: a handful of byte strings, no corpus, no files.
//!
//!     cargo run --example distance
//!
//! Shows the raw ingredients (compressed sizes, conditional complexities)
//! next to the normalized distance, so you can see why two sequences end up
//! close or far.

use usm_knn::compressor::CompressorConfig;
use usm_knn::dataset::PayloadSource;
use usm_knn::metric::{conditional_complexity, usm_distance, ComplexityCache};
use usm_knn::Result;

struct Inline<'a>(&'a [(&'a str, &'a [u8])]);

impl PayloadSource for Inline<'_> {
    fn payload(&self, id: &str) -> Result<&[u8]> {
        self.0
            .iter()
            .find(|(name, _)| *name == id)
            .map(|(_, bytes)| *bytes)
            .ok_or_else(|| usm_knn::Error::UnknownId(id.to_string()))
    }
}

fn main() -> Result<()> {
    let sentences = [
        "the quick brown fox jumps over the lazy dog. ",
        "the dog barks back at the fox until both forget the argument. ",
        "a second fox watches and wonders when the barking will stop. ",
        "eventually everyone naps in the sun. ",
    ];
    let english: String = sentences.iter().cycle().take(24).copied().collect();
    let english_again: String = sentences.iter().rev().cycle().take(24).copied().collect();
    let shouting = "AAAAABBBBBCCCCC".repeat(80);
    let noise: Vec<u8> = {
        // xorshift is plenty for a demo payload
        let mut state = 0x9e3779b97f4a7c15u64;
        (0..1200)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 32) as u8
            })
            .collect()
    };

    let store = Inline(&[
        ("english", english.as_bytes()),
        ("english-again", english_again.as_bytes()),
        ("shouting", shouting.as_bytes()),
        ("noise", &noise),
    ]);
    let cache = ComplexityCache::new(CompressorConfig::default());

    println!("compressed sizes:");
    for (id, bytes) in store.0 {
        let c = cache.single(id, bytes);
        println!("  C({id}) = {c} ({} raw bytes)", bytes.len());
    }

    println!("\nconditional complexities against `english`:");
    for (id, _) in store.0 {
        let c = conditional_complexity(&store, id, "english", &cache)?;
        println!("  C({id} | english) = {c}");
    }

    println!("\npairwise distances:");
    let names = ["english", "english-again", "shouting", "noise"];
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let d = usm_distance(&store, a, b, &cache)?;
            println!("  d({a}, {b}) = {d:.4}");
        }
    }
    println!("\nrelated prose lands close to 0, unrelated payloads close to 1.");
    Ok(())
}
