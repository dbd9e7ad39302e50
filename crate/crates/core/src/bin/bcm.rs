//! Command-line entry points for the brand–celebrity matching pipeline.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use bcm::embeddings::EmbeddingTable;
use bcm::experiments::{
    self, generate_synthetic_dataset, load_checkpoint, plot_data, run_ablation_docs, run_pipeline, save_checkpoint,
    summaries_json_lines, summarize_corpora, train_and_evaluate_matcher, write_summaries, LocalCorpusSource, PipelineConfig,
    PipelineInputs, SyntheticConfig,
};
use bcm::matcher::{splice_summaries, MatcherModel};
use bcm::summarizer::SummarizerModel;

#[derive(Parser)]
#[command(name = "bcm", version, about = "Brand–celebrity matching: summarize entity documents, then match pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted-topic synthetic corpus and pair labels.
    GenData(GenDataArgs),
    /// Train skip-gram word vectors on the corpus.
    TrainEmbeddings(TrainArgs),
    /// Train the summarizer on lead sentences or a supervision file.
    TrainSummarizer(TrainSummarizerArgs),
    /// Summarize the first k documents of every entity.
    Summarize(SummarizeArgs),
    /// Train and evaluate the matcher from saved embeddings and summarizer.
    TrainMatcher(TrainMatcherArgs),
    /// Score one celebrity–brand pair.
    Score(ScoreArgs),
    /// Run the full pipeline and write the report.
    Evaluate(TrainArgs),
    /// Sweep the number of documents per entity.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 63)]
    celebrities: usize,
    #[arg(long, default_value_t = 35)]
    brands: usize,
    #[arg(long, default_value_t = 0.055)]
    positive_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    signal_strength: f64,
    /// Fixed document count per entity (default: 1 encyclopedia + 3..5 news).
    #[arg(long)]
    docs_per_entity: Option<usize>,
    /// Comma-separated 1-based document positions that carry signal.
    #[arg(long, value_delimiter = ',')]
    signal_docs: Option<Vec<usize>>,
}

/// Pipeline configuration: an optional JSON file, then flag overrides.
#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// JSON-lines {"text", "summary"} summarizer supervision.
    #[arg(long)]
    supervision: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Summarizer preset: desk or paper.
    #[arg(long)]
    preset: Option<String>,
    /// Documents per entity fed to the matcher.
    #[arg(long)]
    docs_per_entity: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    embedding_epochs: Option<usize>,
    #[arg(long)]
    summarizer_epochs: Option<usize>,
    #[arg(long)]
    matcher_epochs: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    positive_weight: Option<f64>,
}

impl PipelineArgs {
    fn resolve(&self, seed: u64) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::from_json_file(p)?,
            None => PipelineConfig::default(),
        };
        c.seed = seed;
        set(&mut c.corpus_path, &self.corpus);
        set(&mut c.pairs_path, &self.pairs);
        set(&mut c.output_dir, &self.out_dir);
        set(&mut c.summarizer.preset, &self.preset);
        set(&mut c.docs_per_entity, &self.docs_per_entity);
        set(&mut c.train_fraction, &self.train_fraction);
        set(&mut c.embeddings.epochs, &self.embedding_epochs);
        set(&mut c.summarizer.epochs, &self.summarizer_epochs);
        set(&mut c.matcher.epochs, &self.matcher_epochs);
        set(&mut c.matcher.threshold, &self.threshold);
        set(&mut c.matcher.positive_weight, &self.positive_weight);
        if self.stopwords.is_some() {
            c.stopwords_path = self.stopwords.clone();
        }
        if self.supervision.is_some() {
            c.supervision_path = self.supervision.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct TrainSummarizerArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Word vectors to start from; trained from scratch when omitted.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    summarizer: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Write JSON-lines here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainMatcherArgs {
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    summarizer: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    matcher: PathBuf,
    #[arg(long)]
    summarizer: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    celebrity: String,
    #[arg(long)]
    brand: String,
    #[arg(long, default_value_t = 4)]
    k: usize,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Comma-separated document counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    k: Vec<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::TrainEmbeddings(a) => {
            let config = a.pipeline.resolve(a.seed)?;
            let inputs = PipelineInputs::load_documents(&config)?;
            let table = experiments::train_embeddings(&config, &inputs)?;
            let path = config.output_dir.join("embeddings.ckpt");
            save_checkpoint(&table, &path)?;
            println!("{}", json!({"checkpoint": path, "vocab_size": table.vocab().len(), "dim": table.dim()}));
            Ok(())
        }
        Command::TrainSummarizer(a) => {
            let config = a.train.pipeline.resolve(a.train.seed)?;
            let inputs = PipelineInputs::load_documents(&config)?;
            let table = match &a.embeddings {
                Some(p) => load_checkpoint::<EmbeddingTable>(p)?,
                None => experiments::train_embeddings(&config, &inputs)?,
            };
            let (model, losses) = experiments::train_summarizer(&config, &inputs, &table)?;
            let path = config.output_dir.join("summarizer.ckpt");
            save_checkpoint(&model, &path)?;
            println!(
                "{}",
                json!({"checkpoint": path, "parameters": model.parameter_count(), "final_loss": losses.last()})
            );
            Ok(())
        }
        Command::Summarize(a) => {
            let model: SummarizerModel = load_checkpoint(&a.summarizer)?;
            let source = load_source(&a.corpus, a.stopwords.as_deref())?;
            let summaries = summarize_corpora(&model, source.corpora(), a.k)?;
            match &a.out {
                Some(p) => write_summaries(p, &summaries, model.vocab())?,
                None => print!("{}", summaries_json_lines(&summaries, model.vocab())?),
            }
            Ok(())
        }
        Command::TrainMatcher(a) => {
            let mut config = a.train.pipeline.resolve(a.train.seed)?;
            config.embeddings_checkpoint = Some(a.embeddings);
            config.summarizer_checkpoint = Some(a.summarizer);
            let inputs = PipelineInputs::load(&config)?;
            let upstream = experiments::run_upstream(&config, &inputs, config.docs_per_entity)?;
            let outcome = train_and_evaluate_matcher(
                &config,
                &upstream.embeddings,
                &upstream.summaries,
                &inputs.pairs,
                config.docs_per_entity,
            )?;
            let path = config.output_dir.join("matcher.ckpt");
            save_checkpoint(&outcome.model, &path)?;
            println!("{}", serde_json::to_string(&outcome.metrics)?);
            Ok(())
        }
        Command::Score(a) => score(a),
        Command::Evaluate(a) => {
            let config = a.pipeline.resolve(a.seed)?;
            let outcome = run_pipeline(&config)?;
            print!("{}", outcome.report.to_json());
            Ok(())
        }
        Command::Ablate(a) => {
            let config = a.train.pipeline.resolve(a.train.seed)?;
            let rows = run_ablation_docs(&config, &a.k)?;
            print!("{}", plot_data(&rows));
            Ok(())
        }
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let config = SyntheticConfig {
        num_celebrities: a.celebrities,
        num_brands: a.brands,
        positive_rate: a.positive_rate,
        signal_strength: a.signal_strength,
        docs_per_entity: a.docs_per_entity,
        signal_docs: a.signal_docs,
        ..SyntheticConfig::default()
    };
    let data = generate_synthetic_dataset(&config, a.seed)?;
    let (corpus, pairs) = data.write(&a.out_dir)?;
    println!(
        "{}",
        json!({"corpus": corpus, "pairs": pairs, "num_pairs": data.pairs.len(), "positives": data.positives()})
    );
    Ok(())
}

fn load_source(corpus: &Path, stopwords: Option<&Path>) -> Result<LocalCorpusSource> {
    let config = PipelineConfig {
        corpus_path: corpus.to_path_buf(),
        stopwords_path: stopwords.map(Path::to_path_buf),
        ..PipelineConfig::default()
    };
    Ok(PipelineInputs::load_documents(&config)?.source)
}

fn score(a: ScoreArgs) -> Result<()> {
    let matcher: MatcherModel = load_checkpoint(&a.matcher)?;
    let summarizer: SummarizerModel = load_checkpoint(&a.summarizer)?;
    if summarizer.vocab().tokens() != matcher.embeddings().vocab().tokens() {
        bail!("summarizer and matcher checkpoints were built with different vocabularies");
    }
    let source = load_source(&a.corpus, a.stopwords.as_deref())?;
    let l = matcher.config().summary_max_tokens;
    let side = |id: &str| -> Result<Vec<usize>> {
        let entity = source.entity(id).with_context(|| format!("entity {id:?} not found in the corpus"))?;
        Ok(splice_summaries(&summarizer.summarize_entity(entity, a.k)?, a.k, l))
    };
    let matrix = matcher.similarity(&side(&a.celebrity)?, &side(&a.brand)?)?;
    let probability = matcher.score(&matrix)?;
    println!(
        "{}",
        json!({
            "celebrity_id": a.celebrity,
            "brand_id": a.brand,
            "probability": probability,
            "prediction": u8::from(probability >= matcher.config().threshold),
        })
    );
    Ok(())
}
