//! Planted-topic synthetic corpus and pair labels.
//!
//! Every entity gets a latent topic, assigned round-robin over a shuffled
//! entity order so topic sizes stay balanced. A celebrity–brand pair is
//! positive exactly when the latent topics agree, so with `T` topics about
//! `1/T` of the pairs are positive; `T = round(1 / positive_rate)`. Topic 0
//! is populated on both sides, so there is always at least one positive.
//!
//! Signal documents open with a short sentence of topic keywords
//! (`topic07a topic07b topic07c.`) with probability `signal_strength`,
//! and with a sentence of filler words otherwise. The remaining sentences
//! are filler. At strength 0 the corpus carries no label information.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ExperimentError, Result};
use crate::text::{to_json_lines, CorpusRecord, PairLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_celebrities: usize,
    pub num_brands: usize,
    pub positive_rate: f64,
    pub signal_strength: f64,
    /// Fixed document count per entity; `None` draws 1 encyclopedia entry
    /// plus 3 to 5 news documents.
    pub docs_per_entity: Option<usize>,
    /// 1-based document positions that may carry signal; `None` means all.
    pub signal_docs: Option<Vec<usize>>,
    pub keywords_per_topic: usize,
    pub filler_vocabulary: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_celebrities: 63,
            num_brands: 35,
            positive_rate: 0.055,
            signal_strength: 0.9,
            docs_per_entity: None,
            signal_docs: None,
            keywords_per_topic: 3,
            filler_vocabulary: 120,
        }
    }
}

impl SyntheticConfig {
    /// Four documents per entity with signal only in documents 2 to 4.
    pub fn ablation() -> Self {
        Self {
            docs_per_entity: Some(4),
            signal_docs: Some(vec![2, 3, 4]),
            ..Self::default()
        }
    }

    pub fn num_topics(&self) -> usize {
        (1.0 / self.positive_rate).round().max(1.0) as usize
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(ExperimentError::InvalidConfig(m));
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return fail(format!("positive_rate {} must lie in (0, 1)", self.positive_rate));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return fail(format!("signal_strength {} must lie in [0, 1]", self.signal_strength));
        }
        if self.num_celebrities == 0 || self.num_brands == 0 {
            return fail("need at least one celebrity and one brand".into());
        }
        if self.docs_per_entity == Some(0) || self.keywords_per_topic == 0 || self.filler_vocabulary < 8 {
            return fail("docs_per_entity and keywords_per_topic must be positive, filler_vocabulary ≥ 8".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub corpus: Vec<CorpusRecord>,
    pub pairs: Vec<PairLabel>,
    pub celebrity_topics: Vec<usize>,
    pub brand_topics: Vec<usize>,
}

impl SyntheticDataset {
    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.label == 1).count()
    }

    /// Writes `corpus.jsonl` and `pairs.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
        let corpus = dir.join("corpus.jsonl");
        let pairs = dir.join("pairs.jsonl");
        fs::write(&corpus, to_json_lines(&self.corpus)).map_err(|e| ExperimentError::io(&corpus, e))?;
        fs::write(&pairs, to_json_lines(&self.pairs)).map_err(|e| ExperimentError::io(&pairs, e))?;
        Ok((corpus, pairs))
    }
}

fn keyword(topic: usize, i: usize) -> String {
    // topic00a, topic00b, ... then topic00k10 beyond the alphabet.
    let suffix = if i < 26 {
        char::from(b'a' + i as u8).to_string()
    } else {
        format!("k{i}")
    };
    format!("topic{topic:02}{suffix}")
}

fn filler(i: usize) -> String {
    const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let a = ONSETS[i % 12];
    let b = VOWELS[(i / 12) % 5];
    let c = ONSETS[(i / 60 + 5 * i) % 12];
    let d = VOWELS[(i / 3) % 5];
    format!("{a}{b}{c}{d}{}", i / 60)
}

fn assign_topics(n: usize, topics: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out = vec![0; n];
    for (slot, &entity) in order.iter().enumerate() {
        out[entity] = slot % topics;
    }
    out
}

struct DocWriter<'a> {
    config: &'a SyntheticConfig,
    fillers: Vec<String>,
}

impl DocWriter<'_> {
    fn filler_sentence(&self, rng: &mut ChaCha8Rng, len: usize) -> String {
        let words: Vec<&str> = (0..len).map(|_| self.fillers[rng.gen_range(0..self.fillers.len())].as_str()).collect();
        format!("{}.", capitalize(&words.join(" ")))
    }

    fn document(&self, rng: &mut ChaCha8Rng, topic: Option<usize>) -> String {
        let lead = match topic {
            Some(t) => {
                let words: Vec<String> = (0..self.config.keywords_per_topic).map(|i| keyword(t, i)).collect();
                format!("{}.", capitalize(&words.join(" ")))
            }
            None => self.filler_sentence(rng, self.config.keywords_per_topic),
        };
        let extra = rng.gen_range(2..=3);
        let mut sentences = vec![lead];
        for _ in 0..extra {
            let len = rng.gen_range(4..=6);
            sentences.push(self.filler_sentence(rng, len));
        }
        sentences.join(" ")
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Deterministic for a given config and seed.
pub fn generate_synthetic_dataset(config: &SyntheticConfig, seed: u64) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topics = config.num_topics();
    let celebrity_topics = assign_topics(config.num_celebrities, topics, &mut rng);
    let brand_topics = assign_topics(config.num_brands, topics, &mut rng);

    let mut pairs = Vec::with_capacity(config.num_celebrities * config.num_brands);
    for (c, &ct) in celebrity_topics.iter().enumerate() {
        for (b, &bt) in brand_topics.iter().enumerate() {
            pairs.push(PairLabel {
                celebrity_id: format!("celebrity{c:03}"),
                brand_id: format!("brand{b:03}"),
                label: u8::from(ct == bt),
            });
        }
    }
    let positives = pairs.iter().filter(|p| p.label == 1).count();
    if positives == 0 {
        return Err(ExperimentError::NoPositives);
    }
    log::info!(
        "synthetic dataset: {} pairs, {positives} positive ({:.4}), {topics} topics",
        pairs.len(),
        positives as f64 / pairs.len() as f64
    );

    let writer = DocWriter {
        config,
        fillers: (0..config.filler_vocabulary).map(filler).collect(),
    };
    let entities = celebrity_topics
        .iter()
        .enumerate()
        .map(|(i, &t)| (format!("celebrity{i:03}"), "celebrity", t))
        .chain(brand_topics.iter().enumerate().map(|(i, &t)| (format!("brand{i:03}"), "brand", t)));
    let mut corpus = Vec::new();
    for (entity_id, entity_type, topic) in entities {
        let n_docs = config.docs_per_entity.unwrap_or_else(|| 1 + rng.gen_range(3..=5));
        for d in 0..n_docs {
            let position = d + 1;
            let eligible = config.signal_docs.as_ref().is_none_or(|s| s.contains(&position));
            let carries = eligible && rng.gen::<f64>() < config.signal_strength;
            let text = writer.document(&mut rng, carries.then_some(topic));
            corpus.push(CorpusRecord {
                entity_id: entity_id.clone(),
                entity_type: entity_type.to_string(),
                source_kind: if d == 0 { "encyclopedia" } else { "news" }.to_string(),
                doc_id: format!("{entity_id}-d{position}"),
                text,
            });
        }
    }
    Ok(SyntheticDataset {
        corpus,
        pairs,
        celebrity_topics,
        brand_topics,
    })
}
