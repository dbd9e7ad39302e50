//! Trains skip-gram vectors on a tiny two-topic corpus and prints neighbours.
//!
//! cargo run --release --example skipgram_embeddings

use std::sync::Arc;

use anyhow::Result;
use bcm::embeddings::{train_skipgram, SkipGramConfig};
use bcm::text::{build_vocabulary, Document, EntityCorpus, EntityType, SourceKind, StopWords};

fn main() -> Result<()> {
    let stop = StopWords::from_words(["the", "a", "and", "of", "in"]);
    let texts = [
        "The striker scored a goal in the final and the stadium cheered.",
        "A goal from the striker won the final of the league.",
        "The league final drew a stadium of fans cheering every goal.",
        "The designer showed a dress and a handbag at the fashion week.",
        "Fashion week opened with a handbag line from the designer.",
        "The dress and handbag collection defined fashion week.",
    ];
    let docs = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Document::new(format!("d{i}"), SourceKind::News, *t, &stop))
        .collect();
    let corpus = vec![EntityCorpus::new("demo", EntityType::Brand, docs)?];
    let vocab = Arc::new(build_vocabulary(&corpus, 1)?);

    let config = SkipGramConfig {
        dim: 16,
        window: 3,
        epochs: 300,
        ..SkipGramConfig::default()
    };
    let table = train_skipgram(&corpus, vocab, &config, 7)?;
    for word in ["goal", "handbag"] {
        let near: Vec<String> = table
            .nearest_neighbors(word, 4)?
            .into_iter()
            .map(|(w, c)| format!("{w} ({c:.2})"))
            .collect();
        println!("{word}: {}", near.join(", "));
    }
    Ok(())
}
