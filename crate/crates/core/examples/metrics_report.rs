//! Classification metrics for constant predictors on an imbalanced set, and
//! ROUGE-N on a pair of summaries.
//!
//! cargo run --example metrics_report

use anyhow::Result;
use bcm::metrics::{classification_metrics, f1_from_pr, rouge_n_text};

fn main() -> Result<()> {
    let labels: Vec<bool> = (0..1000).map(|i| i % 200 < 11).collect();
    for (name, guess) in [("always 0", false), ("always 1", true)] {
        let report = classification_metrics(&vec![guess; labels.len()], &labels)?;
        println!("{name}: {}", serde_json::to_string(&report)?);
    }
    println!("F1 at P=0.990, R=0.811: {:.4}", f1_from_pr(0.990, 0.811));

    let reference = "The brand signed the singer as its new global ambassador.";
    let candidate = "Brand signs singer as global ambassador.";
    for n in [1, 2] {
        println!("ROUGE-{n}: {:.3}", rouge_n_text(reference, candidate, n));
    }
    Ok(())
}
