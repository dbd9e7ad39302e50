//! Sweeps the number of documents per entity fed to the matcher.
//!
//! Signal lives only in documents 2 to 4, so k=1 sees none of it and k=5
//! matches k=4 on four-document entities.
//!
//! cargo run --release --example document_ablation -- [output_dir]

use std::path::PathBuf;

use anyhow::Result;
use bcm::experiments::{generate_synthetic_dataset, plot_data, run_ablation_docs, PipelineConfig, SyntheticConfig};

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "runs/ablation".into()).into();

    let data = generate_synthetic_dataset(&SyntheticConfig::ablation(), 11)?;
    let (corpus_path, pairs_path) = data.write(&out.join("data"))?;
    let config = PipelineConfig {
        corpus_path,
        pairs_path,
        output_dir: out.clone(),
        ..PipelineConfig::default()
    };
    let rows = run_ablation_docs(&config, &[1, 2, 3, 4, 5])?;
    print!("{}", plot_data(&rows));
    Ok(())
}
