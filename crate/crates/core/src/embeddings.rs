//! Skip-gram word vectors trained with negative sampling.
//!
//! The table has one row per vocabulary id, specials included. The `<pad>`
//! row is exactly zero and is never updated, so padded positions contribute
//! nothing to dot-product similarities.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{self, sigmoid_scalar as sigmoid, Tensor, TensorError};
use crate::text::{EntityCorpus, Vocabulary, NUM_SPECIALS, PAD_ID};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("corpus contains no in-vocabulary tokens")]
    EmptyCorpus,
    #[error("invalid skip-gram config: {0}")]
    InvalidConfig(String),
    #[error("training produced a non-finite vector after epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Starting learning rate; decays linearly towards `lr * 1e-4`.
    pub learning_rate: f64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    vocab: Arc<Vocabulary>,
    dim: usize,
    vectors: Tensor,
}

impl EmbeddingTable {
    /// Wraps an existing `|V|×dim` matrix. The `<pad>` row is forced to zero.
    pub fn from_vectors(vocab: Arc<Vocabulary>, dim: usize, mut values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != vocab.len() * dim {
            return Err(EmbeddingError::InvalidConfig(format!(
                "expected {}×{} values, got {}",
                vocab.len(),
                dim,
                values.len()
            )));
        }
        values[PAD_ID * dim..(PAD_ID + 1) * dim].iter_mut().for_each(|v| *v = 0.0);
        let vectors = Tensor::new(&[vocab.len(), dim], values)?;
        Ok(Self { vocab, dim, vectors })
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Frozen `|V|×dim` tensor.
    pub fn vectors(&self) -> &Tensor {
        &self.vectors
    }

    pub fn row(&self, id: usize) -> Vec<f64> {
        self.vectors.data()[id * self.dim..(id + 1) * self.dim].to_vec()
    }

    pub fn vector(&self, token: &str) -> Result<Vec<f64>> {
        let id = self.vocab.id(token).ok_or_else(|| EmbeddingError::UnknownToken(token.to_owned()))?;
        Ok(self.row(id))
    }

    /// Row gather, `len(ids)×dim`.
    pub fn lookup(&self, ids: &[usize]) -> Result<Tensor> {
        Ok(tensor::embedding(&self.vectors, ids)?)
    }

    /// Up to `k` most similar non-special tokens, excluding `token` itself.
    pub fn nearest_neighbors(&self, token: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let query_id = self.vocab.id(token).ok_or_else(|| EmbeddingError::UnknownToken(token.to_owned()))?;
        let query = self.row(query_id);
        let mut scored = Vec::new();
        for id in NUM_SPECIALS..self.vocab.len() {
            if id == query_id {
                continue;
            }
            let sim = cosine(&query, &self.row(id))?;
            scored.push((self.vocab.token(id).expect("id in range").to_owned(), sim));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored)
    }
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    assert_eq!(u.len(), v.len(), "cosine of vectors with different lengths");
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cumulative unigram^0.75 distribution over non-special ids.
struct NegativeSampler {
    ids: Vec<usize>,
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    fn new(counts: &[usize]) -> Self {
        let mut ids = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (id, &c) in counts.iter().enumerate().skip(NUM_SPECIALS) {
            if c > 0 {
                acc += (c as f64).powf(0.75);
                ids.push(id);
                cumulative.push(acc);
            }
        }
        Self { ids, cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty sampler");
        let r = rng.gen::<f64>() * total;
        let pos = self.cumulative.partition_point(|&c| c <= r).min(self.ids.len() - 1);
        self.ids[pos]
    }
}

/// Trains skip-gram vectors over every document of every entity.
pub fn train_skipgram(
    corpora: &[EntityCorpus],
    vocab: Arc<Vocabulary>,
    config: &SkipGramConfig,
    seed: u64,
) -> Result<EmbeddingTable> {
    if config.dim < 2 || config.window < 1 || config.negatives < 1 {
        return Err(EmbeddingError::InvalidConfig(format!(
            "need dim ≥ 2, window ≥ 1, negatives ≥ 1 (got {}, {}, {})",
            config.dim, config.window, config.negatives
        )));
    }
    let dim = config.dim;
    let sentences: Vec<Vec<usize>> = corpora
        .iter()
        .flat_map(|c| &c.documents)
        .map(|d| vocab.encode(&d.tokens).into_iter().filter(|&id| id >= NUM_SPECIALS).collect::<Vec<_>>())
        .filter(|s: &Vec<usize>| !s.is_empty())
        .collect();
    let total_tokens: usize = sentences.iter().map(Vec::len).sum();
    if total_tokens == 0 {
        return Err(EmbeddingError::EmptyCorpus);
    }
    let mut counts = vec![0usize; vocab.len()];
    sentences.iter().flatten().for_each(|&id| counts[id] += 1);
    let sampler = NegativeSampler::new(&counts);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 0.5 / dim as f64;
    let mut input: Vec<f64> = (0..vocab.len() * dim).map(|_| rng.gen_range(-bound..bound)).collect();
    input[PAD_ID * dim..(PAD_ID + 1) * dim].iter_mut().for_each(|v| *v = 0.0);
    let mut output = vec![0.0; vocab.len() * dim];
    let mut hidden_grad = vec![0.0; dim];

    let schedule_len = (config.epochs * total_tokens).max(1) as f64;
    let mut processed = 0usize;
    for epoch in 0..config.epochs {
        for sentence in &sentences {
            for (pos, &center) in sentence.iter().enumerate() {
                let lr = (config.learning_rate * (1.0 - processed as f64 / schedule_len))
                    .max(config.learning_rate * 1e-4);
                processed += 1;
                let reach = rng.gen_range(1..=config.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for (ctx_pos, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    hidden_grad.iter_mut().for_each(|v| *v = 0.0);
                    let center_row = center * dim..(center + 1) * dim;
                    for n in 0..=config.negatives {
                        let (target, label) = if n == 0 {
                            (context, 1.0)
                        } else {
                            let t = sampler.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let out_row = target * dim..(target + 1) * dim;
                        let dot: f64 = input[center_row.clone()]
                            .iter()
                            .zip(&output[out_row.clone()])
                            .map(|(a, b)| a * b)
                            .sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for j in 0..dim {
                            hidden_grad[j] += g * output[out_row.start + j];
                            output[out_row.start + j] += g * input[center_row.start + j];
                        }
                    }
                    input[center_row].iter_mut().zip(&hidden_grad).for_each(|(v, g)| *v += g);
                }
            }
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { epoch });
        }
    }
    EmbeddingTable::from_vectors(vocab, dim, input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{Document, EntityType, SourceKind, StopWords, PAD_ID};

    fn corpus(texts: &[String]) -> Vec<EntityCorpus> {
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("d{i}"), SourceKind::News, t.as_str(), &StopWords::empty()))
            .collect();
        vec![EntityCorpus::new("e", EntityType::Brand, docs).unwrap()]
    }

    fn vocab_of(c: &[EntityCorpus]) -> Arc<Vocabulary> {
        Arc::new(crate::text::build_vocabulary(c, 1).unwrap())
    }

    #[test]
    fn cosine_identities() {
        let v = [0.3, -1.2, 4.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(cosine(&v, &[0.0; 3]), Err(EmbeddingError::ZeroVector)));
    }

    #[test]
    fn table_shape_includes_specials() {
        let c = corpus(&["x y z x y".into()]);
        let cfg = SkipGramConfig { dim: 2, epochs: 1, ..Default::default() };
        let table = train_skipgram(&c, vocab_of(&c), &cfg, 1).unwrap();
        assert_eq!(table.vectors().shape(), &[3 + NUM_SPECIALS, 2]);
    }

    #[test]
    fn seeded_training_is_bitwise_deterministic() {
        let c = corpus(&["a b c d a b".into(), "c d e f".into()]);
        let v = vocab_of(&c);
        let cfg = SkipGramConfig { dim: 8, epochs: 3, ..Default::default() };
        let t1 = train_skipgram(&c, v.clone(), &cfg, 42).unwrap();
        let t2 = train_skipgram(&c, v, &cfg, 42).unwrap();
        let bits = |t: &EmbeddingTable| t.vectors().to_vec().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&t1), bits(&t2));
    }

    #[test]
    fn co_occurring_tokens_end_up_closer() {
        let mut texts: Vec<String> = (0..60).map(|_| "a b a b a b".to_string()).collect();
        texts.extend((0..60).map(|_| "c d c d c d".to_string()));
        let c = corpus(&texts);
        let cfg = SkipGramConfig { dim: 16, epochs: 5, negatives: 3, window: 2, ..Default::default() };
        let t = train_skipgram(&c, vocab_of(&c), &cfg, 7).unwrap();
        let (a, b, cc) = (t.vector("a").unwrap(), t.vector("b").unwrap(), t.vector("c").unwrap());
        assert!(cosine(&a, &b).unwrap() > cosine(&a, &cc).unwrap());
    }

    #[test]
    fn pad_row_stays_zero_and_lookup_orders_rows() {
        let c = corpus(&["p q r p q r".into()]);
        let t = train_skipgram(&c, vocab_of(&c), &SkipGramConfig::default(), 3).unwrap();
        assert!(t.row(PAD_ID).iter().all(|&v| v == 0.0));
        let pad = t.lookup(&[PAD_ID]).unwrap();
        assert!(pad.to_vec().iter().all(|&v| v == 0.0));

        let i = t.vocab().id("q").unwrap();
        let j = t.vocab().id("r").unwrap();
        let twice = t.lookup(&[i, i]).unwrap().to_vec();
        assert_eq!(twice[..t.dim()], twice[t.dim()..]);
        let fwd = t.lookup(&[i, j]).unwrap().to_vec();
        let rev = t.lookup(&[j, i]).unwrap().to_vec();
        assert_eq!(fwd[..t.dim()], rev[t.dim()..]);
        assert!(t.lookup(&[t.vocab().len()]).is_err());
    }

    #[test]
    fn neighbors_exclude_query_and_specials() {
        let c = corpus(&["a b c d e".into()]);
        let t = train_skipgram(&c, vocab_of(&c), &SkipGramConfig { dim: 4, ..Default::default() }, 5).unwrap();
        let n = t.nearest_neighbors("a", 10).unwrap();
        assert_eq!(n.len(), 4);
        assert!(n.iter().all(|(tok, s)| tok != "a" && !tok.starts_with('<') && (-1.0..=1.0).contains(s)));
        assert_eq!(t.nearest_neighbors("a", 2).unwrap().len(), 2);
    }

    #[test]
    fn rejects_bad_config_and_empty_corpus() {
        let c = corpus(&["a b".into()]);
        let v = vocab_of(&c);
        let bad = SkipGramConfig { dim: 1, ..Default::default() };
        assert!(matches!(train_skipgram(&c, v.clone(), &bad, 0), Err(EmbeddingError::InvalidConfig(_))));
        let other = Arc::new(Vocabulary::from_tokens(["zzz"]));
        assert!(matches!(
            train_skipgram(&c, other, &SkipGramConfig::default(), 0),
            Err(EmbeddingError::EmptyCorpus)
        ));
    }
}
