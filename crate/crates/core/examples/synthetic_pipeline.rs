//! Generates the default planted-topic dataset and runs the full pipeline.
//!
//! cargo run --release --example synthetic_pipeline -- [output_dir]

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use bcm::experiments::{generate_synthetic_dataset, run_pipeline, PipelineConfig, SyntheticConfig};

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "runs/synthetic".into()).into();

    let data = generate_synthetic_dataset(&SyntheticConfig::default(), 7)?;
    let (corpus_path, pairs_path) = data.write(&out.join("data"))?;
    println!("{} pairs, {} positive", data.pairs.len(), data.positives());

    let config = PipelineConfig {
        corpus_path,
        pairs_path,
        output_dir: out.clone(),
        ..PipelineConfig::default()
    };
    let start = Instant::now();
    let outcome = run_pipeline(&config)?;
    println!("{}", outcome.report.to_json());
    println!("finished in {:.1?}; artifacts in {}", start.elapsed(), out.display());
    Ok(())
}
