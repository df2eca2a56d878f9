//! Reliability curves: what a calibrated forecaster looks like next to an
//! overconfident one.
//!
//!     cargo run --example reliability_curve [OUT_DIR]
//!
//! A forecaster is calibrated when, among the cases it scored around p, a
//! fraction of about p actually happened. We fabricate two forecasters over
//! 10,000 coin flips, bin their forecasts, and write one SVG per curve. The
//! calibrated one hugs the diagonal; the overconfident one sags below it at
//! high claimed probabilities.

use std::collections::BTreeMap;
use std::env;
use std::fs;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use usm_knn::classify::{Prediction, ProbabilityForecast};
use usm_knn::cli::reliability_svg;
use usm_knn::evaluate::{brier_score, erc_bins, log_loss, LOG_LOSS_FLOOR};
use usm_knn::Result;

/// `n` yes/no predictions: the forecaster claims `claimed`, the event
/// happens with probability `actual`.
fn forecaster(
    n: usize,
    seed: u64,
    mut claimed_to_actual: impl FnMut(f64) -> f64,
) -> Result<Vec<Prediction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut predictions = Vec::with_capacity(n);
    for i in 0..n {
        let claimed: f64 = rng.gen();
        let actual = claimed_to_actual(claimed);
        let truth = rng.gen_bool(actual);
        let forecast = ProbabilityForecast::new(BTreeMap::from([
            ("yes".to_string(), claimed),
            ("no".to_string(), 1.0 - claimed),
        ]))?;
        predictions.push(Prediction {
            id: format!("flip-{i:05}"),
            true_label: if truth { "yes" } else { "no" }.to_string(),
            predicted_label: if claimed >= 0.5 { "yes" } else { "no" }.to_string(),
            forecast,
        });
    }
    Ok(predictions)
}

fn main() -> Result<()> {
    let out = env::args()
        .nth(1)
        .map_or_else(|| env::temp_dir().join("usmknn-erc"), PathBuf::from);
    fs::create_dir_all(&out).map_err(|e| usm_knn::Error::io(&out, e))?;

    let calibrated = forecaster(10_000, 13, |p| p)?;
    // Claims get stretched toward certainty: a claimed 0.95 is really 0.725.
    let overconfident = forecaster(10_000, 13, |p| 0.5 + (p - 0.5) * 0.5)?;

    for (name, predictions) in [
        ("calibrated", &calibrated),
        ("overconfident", &overconfident),
    ] {
        let bins = erc_bins(predictions, 10)?;
        println!("{name}:");
        println!(
            "  brier {:.4}, log loss {:.4}",
            brier_score(predictions)?,
            log_loss(predictions, LOG_LOSS_FLOOR)?
        );
        println!("  {:>12} {:>9} {:>9}", "bin", "forecast", "observed");
        let mut deviation = 0.0;
        for bin in &bins {
            println!(
                "  [{:.2}, {:.2}) {:>9.3} {:>9.3}",
                bin.lower, bin.upper, bin.mean_forecast, bin.observed_frequency
            );
            deviation += (bin.mean_forecast - bin.observed_frequency).abs();
        }
        println!(
            "  mean |forecast - observed| = {:.4}",
            deviation / bins.len() as f64
        );
        let svg_path = out.join(format!("{name}.svg"));
        fs::write(&svg_path, reliability_svg(&bins))
            .map_err(|e| usm_knn::Error::io(&svg_path, e))?;
        println!("  wrote {}\n", svg_path.display());
    }
    Ok(())
}
