use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::{child_seed, ExperimentError, Result};
use crate::embeddings::{train_skipgram, EmbeddingTable, SkipGramConfig};
use crate::matcher::{splice_summaries, MatchExample, MatcherConfig, MatcherModel};
use crate::metrics::{classification_metrics, mean_rouge, MetricsReport};
use crate::summarizer::{SummarizerConfig, SummarizerModel};
use crate::text::{
    build_vocabulary, clean_text, load_corpus, load_pairs, split_sentences, to_json_lines, Document, EntityCorpus,
    EntityType, PairLabel, SourceKind, StopWords, Vocabulary,
};

/// Summarizer training schedule and architecture preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummarizerSettings {
    /// `"desk"` or `"paper"`.
    pub preset: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Copy word vectors into the token embeddings when dimensions agree.
    pub init_from_embeddings: bool,
}

impl Default for SummarizerSettings {
    fn default() -> Self {
        Self {
            preset: "desk".into(),
            epochs: 6,
            batch_size: 8,
            learning_rate: 2e-3,
            init_from_embeddings: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub corpus_path: PathBuf,
    pub pairs_path: PathBuf,
    pub stopwords_path: Option<PathBuf>,
    /// JSON-lines `{"text": ..., "summary": ...}` used instead of lead
    /// sentences as summarizer targets.
    pub supervision_path: Option<PathBuf>,
    /// Reuse trained stages instead of training them.
    pub embeddings_checkpoint: Option<PathBuf>,
    pub summarizer_checkpoint: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub min_count: usize,
    pub embeddings: SkipGramConfig,
    pub summarizer: SummarizerSettings,
    pub matcher: MatcherConfig,
    /// Documents per entity fed to the matcher, encyclopedia first.
    pub docs_per_entity: usize,
    pub train_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus_path: PathBuf::from("data/corpus.jsonl"),
            pairs_path: PathBuf::from("data/pairs.jsonl"),
            stopwords_path: None,
            supervision_path: None,
            embeddings_checkpoint: None,
            summarizer_checkpoint: None,
            output_dir: PathBuf::from("runs/default"),
            seed: 42,
            min_count: 1,
            // The corpora here are tiny; a few epochs leave every vector
            // pointing the same way.
            embeddings: SkipGramConfig {
                epochs: 50,
                ..SkipGramConfig::default()
            },
            summarizer: SummarizerSettings::default(),
            matcher: MatcherConfig::default(),
            docs_per_entity: 4,
            train_fraction: 0.7,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ExperimentError::InvalidConfig(format!(
                "train_fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        if self.docs_per_entity == 0 {
            return Err(ExperimentError::InvalidConfig("docs_per_entity must be at least 1".into()));
        }
        if self.summarizer.batch_size == 0 {
            return Err(ExperimentError::InvalidConfig("summarizer batch_size must be at least 1".into()));
        }
        self.matcher.validate()?;
        Ok(())
    }

    /// SHA-256 of the configuration JSON with `output_dir` blanked, so the
    /// same experiment written to two places hashes identically.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn stopwords(&self) -> Result<StopWords> {
        match &self.stopwords_path {
            Some(p) => Ok(StopWords::load(p)?),
            None => Ok(StopWords::empty()),
        }
    }
}

/// Where entity documents come from.
pub trait DocumentSource {
    fn fetch(&self, entity_id: &str, entity_type: EntityType) -> Result<Vec<Document>>;
}

/// Documents read from a local corpus file.
#[derive(Debug, Clone)]
pub struct LocalCorpusSource {
    corpora: Vec<EntityCorpus>,
    index: BTreeMap<String, usize>,
}

impl LocalCorpusSource {
    pub fn new(corpora: Vec<EntityCorpus>) -> Self {
        let index = corpora.iter().enumerate().map(|(i, c)| (c.entity_id.clone(), i)).collect();
        Self { corpora, index }
    }

    pub fn load(path: &Path, stopwords: &StopWords) -> Result<Self> {
        Ok(Self::new(load_corpus(path, stopwords)?))
    }

    pub fn corpora(&self) -> &[EntityCorpus] {
        &self.corpora
    }

    pub fn entity(&self, entity_id: &str) -> Option<&EntityCorpus> {
        self.index.get(entity_id).map(|&i| &self.corpora[i])
    }
}

impl DocumentSource for LocalCorpusSource {
    fn fetch(&self, entity_id: &str, entity_type: EntityType) -> Result<Vec<Document>> {
        match self.entity(entity_id) {
            Some(c) if c.entity_type == entity_type => Ok(c.documents.clone()),
            _ => Err(ExperimentError::UnknownEntity(entity_id.to_string())),
        }
    }
}

/// Seeded shuffle, then the first `⌈fraction·N⌉` items train and the rest test.
pub fn split_dataset<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(ExperimentError::InvalidConfig("cannot split an empty pair set".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ExperimentError::InvalidConfig(format!("split fraction {fraction} must lie in (0, 1)")));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fraction * items.len() as f64).ceil() as usize).min(items.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisionRecord {
    pub text: String,
    pub summary: String,
}

pub fn load_supervision(path: &Path) -> Result<Vec<SupervisionRecord>> {
    let file = fs::File::open(path).map_err(|e| ExperimentError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ExperimentError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ExperimentError::Parse {
            path: path.display().to_string(),
            message: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}

/// Cleaned (source, target) token lists for summarizer training.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryExample {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

/// Lead-sentence targets: each document's first sentence, cleaned.
pub fn lead_sentence_examples(corpora: &[EntityCorpus], stopwords: &StopWords) -> Vec<SummaryExample> {
    corpora
        .iter()
        .flat_map(|c| &c.documents)
        .map(|d| SummaryExample {
            source: d.tokens.clone(),
            target: lead_sentence(&d.raw_text, stopwords),
        })
        .collect()
}

pub fn lead_sentence(raw: &str, stopwords: &StopWords) -> Vec<String> {
    split_sentences(raw).first().map(|s| clean_text(s, stopwords)).unwrap_or_default()
}

fn supervision_examples(records: &[SupervisionRecord], stopwords: &StopWords) -> Vec<SummaryExample> {
    records
        .iter()
        .map(|r| SummaryExample {
            source: clean_text(&r.text, stopwords),
            target: clean_text(&r.summary, stopwords),
        })
        .filter(|e| !e.source.is_empty())
        .collect()
}

/// Everything loaded from disk before training starts.
pub struct PipelineInputs {
    pub source: LocalCorpusSource,
    pub pairs: Vec<PairLabel>,
    pub stopwords: StopWords,
    pub supervision: Option<Vec<SupervisionRecord>>,
}

impl PipelineInputs {
    pub fn load(config: &PipelineConfig) -> Result<Self> {
        let mut inputs = Self::load_documents(config)?;
        inputs.pairs = load_pairs(&config.pairs_path)?;
        Ok(inputs)
    }

    /// Corpus, stopwords and supervision only; `pairs` stays empty.
    pub fn load_documents(config: &PipelineConfig) -> Result<Self> {
        let stopwords = config.stopwords()?;
        let source = LocalCorpusSource::load(&config.corpus_path, &stopwords)?;
        let supervision = config.supervision_path.as_deref().map(load_supervision).transpose()?;
        Ok(Self {
            source,
            pairs: Vec::new(),
            stopwords,
            supervision,
        })
    }

    /// Summarizer training examples: the supervision file when present,
    /// lead sentences otherwise.
    pub fn summary_examples(&self) -> Vec<SummaryExample> {
        match &self.supervision {
            Some(records) => supervision_examples(records, &self.stopwords),
            None => lead_sentence_examples(self.source.corpora(), &self.stopwords),
        }
    }

    /// Vocabulary over the corpus plus any supervision text.
    pub fn vocabulary(&self, min_count: usize) -> Result<Vocabulary> {
        let mut corpora = self.source.corpora().to_vec();
        if let Some(records) = &self.supervision {
            let docs: Vec<Document> = records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let text = format!("{} {}", r.text, r.summary);
                    Document::new(format!("supervision-{i}"), SourceKind::News, text, &self.stopwords)
                })
                .collect();
            if let Ok(extra) = EntityCorpus::new("supervision", EntityType::Brand, docs) {
                corpora.push(extra);
            }
        }
        Ok(build_vocabulary(&corpora, min_count)?)
    }
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    f().map_err(|e| ExperimentError::Stage {
        stage: name.to_string(),
        source: Box::new(e),
    })
}

pub fn train_embeddings(config: &PipelineConfig, inputs: &PipelineInputs) -> Result<EmbeddingTable> {
    let vocab = Arc::new(inputs.vocabulary(config.min_count)?);
    Ok(train_skipgram(
        inputs.source.corpora(),
        vocab,
        &config.embeddings,
        child_seed(config.seed, "embeddings"),
    )?)
}

pub fn summarizer_config(settings: &SummarizerSettings, vocab_size: usize) -> Result<SummarizerConfig> {
    SummarizerConfig::preset(&settings.preset, vocab_size)
        .ok_or_else(|| ExperimentError::InvalidConfig(format!("unknown summarizer preset {:?}", settings.preset)))
}

/// Trains a summarizer from scratch; returns the model and per-epoch mean loss.
pub fn train_summarizer(
    config: &PipelineConfig,
    inputs: &PipelineInputs,
    embeddings: &EmbeddingTable,
) -> Result<(SummarizerModel, Vec<f64>)> {
    let vocab = embeddings.vocab().clone();
    let model_config = summarizer_config(&config.summarizer, vocab.len())?;
    let model = SummarizerModel::new(model_config, vocab.clone(), child_seed(config.seed, "summarizer"))?;
    if config.summarizer.init_from_embeddings {
        model.init_token_embeddings(embeddings)?;
    }
    let max_target = model.config().max_decode_len;
    let examples: Vec<(Vec<usize>, Vec<usize>)> = inputs
        .summary_examples()
        .into_iter()
        .map(|e| {
            let mut target = vocab.encode(&e.target);
            target.truncate(max_target);
            (vocab.encode(&e.source), target)
        })
        .filter(|(s, _)| !s.is_empty())
        .collect();
    if examples.is_empty() {
        return Err(ExperimentError::InvalidConfig("no summarizer training examples".into()));
    }
    let losses = fit_summarizer(&model, &examples, &config.summarizer, child_seed(config.seed, "summarizer-order"))?;
    Ok((model, losses))
}

/// Mini-batch Adam over `examples` with a seeded shuffle per epoch.
pub fn fit_summarizer(
    model: &SummarizerModel,
    examples: &[(Vec<usize>, Vec<usize>)],
    settings: &SummarizerSettings,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut optimizer = model.optimizer(settings.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(settings.epochs);
    for epoch in 0..settings.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(settings.batch_size.max(1)) {
            let batch: Vec<(&[usize], &[usize])> =
                chunk.iter().map(|&i| (examples[i].0.as_slice(), examples[i].1.as_slice())).collect();
            total += model.train_batch(&batch, &mut optimizer)? * chunk.len() as f64;
        }
        let mean = total / examples.len() as f64;
        log::info!("summarizer epoch {epoch}: mean loss {mean:.4}");
        history.push(mean);
    }
    Ok(history)
}

/// Greedy summaries of each entity's first `max_docs` documents.
pub type EntitySummaries = BTreeMap<String, Vec<Vec<usize>>>;

pub fn summarize_corpora(model: &SummarizerModel, corpora: &[EntityCorpus], max_docs: usize) -> Result<EntitySummaries> {
    corpora
        .par_iter()
        .map(|c| Ok((c.entity_id.clone(), model.summarize_entity(c, max_docs)?)))
        .collect()
}

/// Mean ROUGE-1/2 of generated summaries against lead-sentence references.
pub fn lead_rouge(
    summaries: &EntitySummaries,
    corpora: &[EntityCorpus],
    vocab: &Vocabulary,
    stopwords: &StopWords,
) -> Result<(f64, f64)> {
    let mut pairs = Vec::new();
    for c in corpora {
        let Some(generated) = summaries.get(&c.entity_id) else {
            continue;
        };
        for (doc, ids) in c.documents.iter().zip(generated) {
            let reference = vocab.decode(&vocab.encode(&lead_sentence(&doc.raw_text, stopwords)))?;
            pairs.push((reference, vocab.decode(ids)?));
        }
    }
    Ok((mean_rouge(&pairs, 1).unwrap_or(0.0), mean_rouge(&pairs, 2).unwrap_or(0.0)))
}

/// Per-pair matcher output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub celebrity_id: String,
    pub brand_id: String,
    pub probability: f64,
    pub prediction: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    pub split: String,
}

fn spliced<'a>(summaries: &'a EntitySummaries, id: &str) -> Result<&'a Vec<Vec<usize>>> {
    summaries.get(id).ok_or_else(|| ExperimentError::UnknownEntity(id.to_string()))
}

pub fn build_examples(
    model: &MatcherModel,
    pairs: &[PairLabel],
    summaries: &EntitySummaries,
    k: usize,
) -> Result<Vec<MatchExample>> {
    let l = model.config().summary_max_tokens;
    pairs
        .iter()
        .map(|p| {
            let c = splice_summaries(spliced(summaries, &p.celebrity_id)?, k, l);
            let b = splice_summaries(spliced(summaries, &p.brand_id)?, k, l);
            Ok(model.example(&p.celebrity_id, &p.brand_id, &c, &b, Some(p.label == 1))?)
        })
        .collect()
}

/// Scores examples in parallel; output order follows the input.
pub fn score_examples(model: &MatcherModel, examples: &[MatchExample], split: &str) -> Result<Vec<PairScore>> {
    examples
        .par_iter()
        .map(|ex| {
            let probability = model.score(&ex.matrix)?;
            Ok(PairScore {
                celebrity_id: ex.celebrity_id.clone(),
                brand_id: ex.brand_id.clone(),
                probability,
                prediction: u8::from(probability >= model.config().threshold),
                label: ex.label.map(u8::from),
                split: split.to_string(),
            })
        })
        .collect()
}

fn sort_scores(scores: &mut [PairScore]) {
    scores.sort_by(|a, b| (&a.celebrity_id, &a.brand_id).cmp(&(&b.celebrity_id, &b.brand_id)));
}

/// Outcome of training and evaluating one matcher.
pub struct MatchOutcome {
    pub model: MatcherModel,
    pub metrics: MetricsReport,
    pub scores: Vec<PairScore>,
    pub losses: Vec<f64>,
}

/// Trains a matcher on the train split of `pairs` and evaluates on the rest.
pub fn train_and_evaluate_matcher(
    config: &PipelineConfig,
    embeddings: &EmbeddingTable,
    summaries: &EntitySummaries,
    pairs: &[PairLabel],
    k: usize,
) -> Result<MatchOutcome> {
    let (train, test) = split_dataset(pairs, config.train_fraction, child_seed(config.seed, "split"))?;
    let model = MatcherModel::new(config.matcher.clone(), embeddings.clone(), child_seed(config.seed, "matcher"))?;
    let train_examples = build_examples(&model, &train, summaries, k)?;
    let test_examples = build_examples(&model, &test, summaries, k)?;
    let losses = model.train(&train_examples, child_seed(config.seed, "matcher-order"))?;
    let mut test_scores = score_examples(&model, &test_examples, "test")?;
    let predictions: Vec<bool> = test_scores.iter().map(|s| s.prediction == 1).collect();
    let labels: Vec<bool> = test_scores.iter().map(|s| s.label == Some(1)).collect();
    let metrics = classification_metrics(&predictions, &labels)?;
    let mut scores = score_examples(&model, &train_examples, "train")?;
    scores.append(&mut test_scores);
    sort_scores(&mut scores);
    Ok(MatchOutcome {
        model,
        metrics,
        scores,
        losses,
    })
}

/// Report written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub metrics: MetricsReport,
    pub config_hash: String,
    pub seed: u64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Shared upstream artifacts: vocabulary, embeddings, summarizer, summaries.
pub struct Upstream {
    pub embeddings: EmbeddingTable,
    pub summarizer: SummarizerModel,
    pub summaries: EntitySummaries,
    pub rouge: Option<(f64, f64)>,
}

/// Trains (or loads) embeddings and the summarizer, then summarizes the first
/// `max_docs` documents of every entity.
pub fn run_upstream(config: &PipelineConfig, inputs: &PipelineInputs, max_docs: usize) -> Result<Upstream> {
    let embeddings = stage("embeddings", || match &config.embeddings_checkpoint {
        Some(p) => Ok(load_checkpoint::<EmbeddingTable>(p)?),
        None => train_embeddings(config, inputs),
    })?;
    let summarizer = stage("summarizer", || match &config.summarizer_checkpoint {
        Some(p) => {
            let m: SummarizerModel = load_checkpoint(p)?;
            if m.vocab().tokens() != embeddings.vocab().tokens() {
                return Err(ExperimentError::VocabularyMismatch);
            }
            Ok(m)
        }
        None => Ok(train_summarizer(config, inputs, &embeddings)?.0),
    })?;
    let summaries = stage("summarize", || summarize_corpora(&summarizer, inputs.source.corpora(), max_docs))?;
    let rouge = match inputs.supervision {
        Some(_) => None,
        None => Some(stage("rouge", || {
            lead_rouge(&summaries, inputs.source.corpora(), summarizer.vocab(), &inputs.stopwords)
        })?),
    };
    Ok(Upstream {
        embeddings,
        summarizer,
        summaries,
        rouge,
    })
}

/// Report plus in-memory artifacts of a full run.
pub struct PipelineOutcome {
    pub report: RunReport,
    pub upstream: Upstream,
    pub matcher: MatcherModel,
    pub scores: Vec<PairScore>,
}

const STALE_MARKER: &str = "STALE";

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| ExperimentError::io(path, e))
}

/// Runs `body` with a `STALE` marker in `dir` that is removed only on success.
fn with_stale_marker<T>(dir: &Path, body: impl FnOnce() -> Result<T>) -> Result<T> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let marker = dir.join(STALE_MARKER);
    write_text(&marker, "run in progress\n")?;
    match body() {
        Ok(v) => {
            fs::remove_file(&marker).map_err(|e| ExperimentError::io(&marker, e))?;
            Ok(v)
        }
        Err(e) => {
            let stage = e.stage().unwrap_or("setup");
            let _ = fs::write(&marker, format!("stage: {stage}\nerror: {e}\n"));
            Err(e)
        }
    }
}

/// True when `dir` holds artifacts from a failed or interrupted run.
pub fn is_stale(dir: &Path) -> bool {
    dir.join(STALE_MARKER).exists()
}

/// Full pipeline. Writes `report.json`, `scores.jsonl`, `summaries.jsonl`
/// and the three checkpoints into `config.output_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    let out = config.output_dir.clone();
    with_stale_marker(&out, || {
        stage("config", || config.validate())?;
        let inputs = stage("load", || PipelineInputs::load(config))?;
        let upstream = run_upstream(config, &inputs, config.docs_per_entity)?;
        let outcome = stage("matcher", || {
            train_and_evaluate_matcher(
                config,
                &upstream.embeddings,
                &upstream.summaries,
                &inputs.pairs,
                config.docs_per_entity,
            )
        })?;
        let mut metrics = outcome.metrics.clone();
        if let Some((r1, r2)) = upstream.rouge {
            metrics.rouge1 = Some(r1);
            metrics.rouge2 = Some(r2);
        }
        let report = RunReport {
            metrics,
            config_hash: config.config_hash(),
            seed: config.seed,
        };
        stage("write", || {
            save_checkpoint(&upstream.embeddings, &out.join("embeddings.ckpt"))?;
            save_checkpoint(&upstream.summarizer, &out.join("summarizer.ckpt"))?;
            save_checkpoint(&outcome.model, &out.join("matcher.ckpt"))?;
            write_text(&out.join("scores.jsonl"), &to_json_lines(&outcome.scores))?;
            write_summaries(&out.join("summaries.jsonl"), &upstream.summaries, upstream.summarizer.vocab())?;
            write_text(&out.join("report.json"), &report.to_json())
        })?;
        Ok(PipelineOutcome {
            report,
            upstream,
            matcher: outcome.model,
            scores: outcome.scores,
        })
    })
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    entity_id: &'a str,
    summaries: Vec<String>,
}

/// One JSON line per entity: `{"entity_id", "summaries": [text, ...]}`.
pub fn summaries_json_lines(summaries: &EntitySummaries, vocab: &Vocabulary) -> Result<String> {
    let mut lines = Vec::new();
    for (id, docs) in summaries {
        let summaries = docs
            .iter()
            .map(|ids| Ok(vocab.decode(ids)?.join(" ")))
            .collect::<Result<Vec<_>>>()?;
        lines.push(SummaryLine { entity_id: id, summaries });
    }
    Ok(to_json_lines(&lines))
}

pub fn write_summaries(path: &Path, summaries: &EntitySummaries, vocab: &Vocabulary) -> Result<()> {
    write_text(path, &summaries_json_lines(summaries, vocab)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub k: usize,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

/// Tab-free plot data: a header line, then `k precision recall f1 accuracy`.
pub fn plot_data(rows: &[AblationRow]) -> String {
    let mut out = String::from("# k precision recall f1 accuracy\n");
    for r in rows {
        out.push_str(&format!(
            "{} {:.6} {:.6} {:.6} {:.6}\n",
            r.k, r.metrics.precision, r.metrics.recall, r.metrics.f1, r.metrics.accuracy
        ));
    }
    out
}

/// Document-count sweep. Upstream stages are shared; each `k` retrains the
/// matcher from the same seed. Writes `ablation.json` and `ablation.dat`.
pub fn run_ablation_docs(config: &PipelineConfig, k_values: &[usize]) -> Result<Vec<AblationRow>> {
    if k_values.is_empty() || k_values.contains(&0) {
        return Err(ExperimentError::InvalidConfig("k values must be non-empty and positive".into()));
    }
    let out = config.output_dir.clone();
    with_stale_marker(&out, || {
        stage("config", || config.validate())?;
        let inputs = stage("load", || PipelineInputs::load(config))?;
        let max_k = *k_values.iter().max().expect("non-empty");
        let upstream = run_upstream(config, &inputs, max_k)?;
        let mut rows = Vec::with_capacity(k_values.len());
        for &k in k_values {
            let outcome = stage(&format!("ablation k={k}"), || {
                train_and_evaluate_matcher(config, &upstream.embeddings, &upstream.summaries, &inputs.pairs, k)
            })?;
            log::info!("k={k}: f1 {:.4} accuracy {:.4}", outcome.metrics.f1, outcome.metrics.accuracy);
            rows.push(AblationRow {
                k,
                metrics: outcome.metrics,
            });
        }
        stage("write", || {
            write_text(&out.join("ablation.dat"), &plot_data(&rows))?;
            let json = serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n";
            write_text(&out.join("ablation.json"), &json)
        })?;
        Ok(rows)
    })
}
