//! Trains the similarity-matrix CNN on hand-built token sequences: pairs
//! match when both sides mention the same topic word.
//!
//! cargo run --release --example matcher_toy

use std::sync::Arc;

use anyhow::Result;
use bcm::embeddings::EmbeddingTable;
use bcm::matcher::{splice_summaries, MatcherConfig, MatcherModel};
use bcm::metrics::classification_metrics;
use bcm::text::Vocabulary;

fn main() -> Result<()> {
    // Four orthogonal topic words and some shared filler.
    let words = ["music", "sport", "fashion", "film", "news", "today", "report"];
    let vocab = Arc::new(Vocabulary::from_tokens(words));
    let dim = 8;
    let mut values = vec![0.0; vocab.len() * dim];
    for (i, w) in words.iter().enumerate() {
        let id = vocab.id(w).expect("in vocabulary");
        if i < 4 {
            values[id * dim + i] = 2.0;
        } else {
            values[id * dim + 4 + (i - 4)] = 0.5;
        }
    }
    let table = EmbeddingTable::from_vectors(vocab.clone(), dim, values)?;

    let config = MatcherConfig {
        epochs: 30,
        ..MatcherConfig::default()
    };
    let model = MatcherModel::new(config, table, 5)?;
    let side = |topic: &str, filler: &str| {
        let summary = vocab.encode(&[filler, topic, "report"]);
        splice_summaries(&[summary.clone(), summary], 2, 32)
    };

    let mut examples = Vec::new();
    for (i, a) in words[..4].iter().enumerate() {
        for (j, b) in words[..4].iter().enumerate() {
            for filler in ["news", "today"] {
                let ex = model.example(*a, *b, &side(a, filler), &side(b, "news"), Some(i == j))?;
                examples.push(ex);
            }
        }
    }
    let losses = model.train(&examples, 1)?;
    println!("loss: first epoch {:.3}, last epoch {:.3}", losses[0], losses[losses.len() - 1]);

    let predictions: Vec<bool> = examples.iter().map(|e| model.predict(&e.matrix)).collect::<Result<_, _>>()?;
    let labels: Vec<bool> = examples.iter().map(|e| e.label == Some(true)).collect();
    let report = classification_metrics(&predictions, &labels)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}
