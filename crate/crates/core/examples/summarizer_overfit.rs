//! Overfits the desk-preset transformer on a handful of document/summary
//! pairs, then decodes them greedily and reports ROUGE.
//!
//! cargo run --release --example summarizer_overfit

use std::sync::Arc;

use anyhow::Result;
use bcm::metrics::rouge_n;
use bcm::summarizer::{SummarizerConfig, SummarizerModel};
use bcm::text::{clean_text, StopWords, Vocabulary};

const PAIRS: [(&str, &str); 4] = [
    (
        "The singer released a new album on Friday after a two year break from touring.",
        "singer releases new album",
    ),
    (
        "Shares of the sportswear brand rose sharply after strong quarterly sales in Asia.",
        "sportswear shares rise",
    ),
    (
        "The actor signed a three film contract with the studio following his award win.",
        "actor signs studio contract",
    ),
    (
        "A luxury watchmaker opened its largest flagship store in the city centre this week.",
        "watchmaker opens flagship store",
    ),
];

fn main() -> Result<()> {
    let stop = StopWords::from_words(["the", "a", "of", "on", "in", "its", "his", "with", "from", "after", "this"]);
    let cleaned: Vec<(Vec<String>, Vec<String>)> =
        PAIRS.iter().map(|(d, s)| (clean_text(d, &stop), clean_text(s, &stop))).collect();
    let mut words: Vec<String> = cleaned.iter().flat_map(|(d, s)| d.iter().chain(s)).cloned().collect();
    words.sort();
    words.dedup();
    let vocab = Arc::new(Vocabulary::from_tokens(words));

    let model = SummarizerModel::new(SummarizerConfig::desk(vocab.len()), vocab.clone(), 3)?;
    println!("parameters: {}", model.parameter_count());
    let encoded: Vec<(Vec<usize>, Vec<usize>)> =
        cleaned.iter().map(|(d, s)| (vocab.encode(d), vocab.encode(s))).collect();
    let batch: Vec<(&[usize], &[usize])> = encoded.iter().map(|(d, s)| (d.as_slice(), s.as_slice())).collect();
    let mut adam = model.optimizer(1e-3);
    for step in 0..=120 {
        let loss = model.train_batch(&batch, &mut adam)?;
        if step % 20 == 0 {
            println!("step {step:3}  loss {loss:.4}");
        }
    }
    for (doc, target) in &cleaned {
        let summary = vocab.decode(&model.generate_greedy(&vocab.encode(doc))?)?;
        println!("{:<36} ROUGE-1 {:.2}", summary.join(" "), rouge_n(target, &summary, 1));
    }
    Ok(())
}
