//! Saves and reloads all three model types and checks the tensors bitwise.
//!
//! cargo run --example checkpoint_roundtrip

use std::sync::Arc;

use anyhow::{ensure, Result};
use bcm::embeddings::EmbeddingTable;
use bcm::experiments::{load_checkpoint, save_checkpoint, Checkpointable};
use bcm::matcher::{MatcherConfig, MatcherModel};
use bcm::summarizer::{SummarizerConfig, SummarizerModel};
use bcm::text::Vocabulary;

fn bits<M: Checkpointable>(m: &M) -> Vec<(String, Vec<u64>)> {
    m.checkpoint_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.to_vec().into_iter().map(f64::to_bits).collect()))
        .collect()
}

fn round_trip<M: Checkpointable>(model: &M, path: &std::path::Path) -> Result<()> {
    save_checkpoint(model, path)?;
    let loaded: M = load_checkpoint(path)?;
    ensure!(bits(model) == bits(&loaded), "{} tensors changed", M::KIND);
    println!("{:<10} {} tensors, {} bytes", M::KIND, bits(model).len(), std::fs::metadata(path)?.len());
    Ok(())
}

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("bcm-checkpoint-example");
    let vocab = Arc::new(Vocabulary::from_tokens(["alpha", "beta", "gamma"]));
    let dim = 64;
    let values = (0..vocab.len() * dim).map(|i| (i as f64 * 0.37).sin()).collect();
    let table = EmbeddingTable::from_vectors(vocab.clone(), dim, values)?;
    let summarizer = SummarizerModel::new(SummarizerConfig::desk(vocab.len()), vocab, 1)?;
    let matcher = MatcherModel::new(MatcherConfig::default(), table.clone(), 2)?;

    round_trip(&table, &dir.join("embeddings.ckpt"))?;
    round_trip(&summarizer, &dir.join("summarizer.ckpt"))?;
    round_trip(&matcher, &dir.join("matcher.ckpt"))?;
    Ok(())
}
