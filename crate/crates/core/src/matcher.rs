//! CNN matcher over a token-level dot-product similarity matrix.
//!
//! Each entity is represented by an `L`-token sequence spliced from its
//! document summaries. The `L×L` matrix of embedding dot products feeds a
//! stack of conv + ReLU + max-pool stages, then a one-hidden-layer MLP
//! producing a single logit.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::EmbeddingTable;
use crate::tensor::{
    bce_with_logits, conv2d, maxpool2d, matmul_bt_raw, sigmoid_scalar, zero_grads, Activation, AdamState, Reduction,
    Tensor, TensorError,
};
use crate::text::{PAD_ID, SEP_ID};

#[derive(Debug, Error)]
pub enum MatcherError {
    #[error("invalid matcher config: {0}")]
    InvalidConfig(String),
    #[error("token sequence has length {actual}, expected {expected}")]
    SequenceLength { expected: usize, actual: usize },
    #[error("token id {id} out of range for embedding table of {rows} rows")]
    BadTokenId { id: usize, rows: usize },
    #[error("no training examples")]
    NoExamples,
    #[error("loss became non-finite in epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, MatcherError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    /// Tokens per entity side after splicing; the matrix is `L×L`.
    pub summary_max_tokens: usize,
    pub conv: Vec<ConvSpec>,
    /// One pooling stage after each conv stage.
    pub pool: Vec<PoolSpec>,
    pub mlp_hidden: usize,
    pub threshold: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplier on the positive-class BCE term.
    pub positive_weight: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            summary_max_tokens: 32,
            conv: vec![ConvSpec { kernel: 5, channels: 8 }, ConvSpec { kernel: 3, channels: 10 }],
            pool: vec![PoolSpec { height: 2, width: 2 }; 2],
            mlp_hidden: 32,
            threshold: 0.5,
            epochs: 100,
            batch_size: 2,
            learning_rate: 1e-3,
            positive_weight: 1.0,
        }
    }
}

impl MatcherConfig {
    /// Map `(height, width)` after every conv/pool stage, or an error if a
    /// stage would shrink the map below one cell.
    pub fn stage_shapes(&self) -> Result<Vec<(usize, usize)>> {
        let fail = |m: String| Err(MatcherError::InvalidConfig(m));
        if self.summary_max_tokens == 0 || self.mlp_hidden == 0 || self.conv.is_empty() {
            return fail("summary_max_tokens, mlp_hidden and conv stages must be non-empty".into());
        }
        if self.conv.len() != self.pool.len() {
            return fail(format!("{} conv stages but {} pool stages", self.conv.len(), self.pool.len()));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail(format!("threshold {} outside [0, 1]", self.threshold));
        }
        let (mut h, mut w) = (self.summary_max_tokens, self.summary_max_tokens);
        let mut shapes = Vec::new();
        for (i, (c, p)) in self.conv.iter().zip(&self.pool).enumerate() {
            if c.kernel == 0 || c.channels == 0 || p.height == 0 || p.width == 0 {
                return fail(format!("stage {} has a zero-sized kernel, channel count or pool", i + 1));
            }
            if c.kernel > h || c.kernel > w {
                return fail(format!("conv stage {} kernel {} exceeds map {h}×{w}", i + 1, c.kernel));
            }
            h = (h - c.kernel + 1) / p.height;
            w = (w - c.kernel + 1) / p.width;
            if h == 0 || w == 0 {
                return fail(format!("pooling after conv stage {} leaves an empty map", i + 1));
            }
            shapes.push((h, w));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.stage_shapes().map(|_| ())
    }

    /// Length of the flattened feature vector entering the MLP.
    pub fn flattened_len(&self) -> Result<usize> {
        let (h, w) = *self.stage_shapes()?.last().expect("at least one stage");
        Ok(h * w * self.conv.last().expect("at least one stage").channels)
    }

    pub fn expected_parameter_count(&self) -> Result<usize> {
        let mut count = 0;
        let mut in_channels = 1;
        for c in &self.conv {
            count += c.channels * in_channels * c.kernel * c.kernel + c.channels;
            in_channels = c.channels;
        }
        let flat = self.flattened_len()?;
        Ok(count + flat * self.mlp_hidden + self.mlp_hidden + self.mlp_hidden + 1)
    }
}

/// Joins the first `k` summaries with `[SEP]`, then pads with `<pad>` or
/// truncates to exactly `len` tokens.
pub fn splice_summaries(summaries: &[Vec<usize>], k: usize, len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    for (i, s) in summaries.iter().take(k).enumerate() {
        if i > 0 {
            out.push(SEP_ID);
        }
        out.extend_from_slice(s);
    }
    out.resize(len, PAD_ID);
    out
}

/// `L×L` matrix of embedding dot products. Constant: the table is frozen.
pub fn similarity_matrix(table: &EmbeddingTable, left: &[usize], right: &[usize]) -> Result<Tensor> {
    if left.len() != right.len() {
        return Err(MatcherError::SequenceLength {
            expected: left.len(),
            actual: right.len(),
        });
    }
    let rows = table.vocab().len();
    if let Some(&id) = left.iter().chain(right).find(|&&id| id >= rows) {
        return Err(MatcherError::BadTokenId { id, rows });
    }
    let d = table.dim();
    let gather = |ids: &[usize]| -> Vec<f64> { ids.iter().flat_map(|&id| table.row(id)).collect() };
    let (a, b) = (gather(left), gather(right));
    let n = left.len();
    Ok(Tensor::new(&[n, n], matmul_bt_raw(&a, &b, n, d, n))?)
}

/// One celebrity–brand pair ready for the matcher.
#[derive(Debug, Clone)]
pub struct MatchExample {
    pub celebrity_id: String,
    pub brand_id: String,
    pub matrix: Tensor,
    pub label: Option<bool>,
}

struct ConvLayer {
    weight: Tensor,
    bias: Tensor,
}

pub struct MatcherModel {
    config: MatcherConfig,
    embeddings: EmbeddingTable,
    convs: Vec<ConvLayer>,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

impl MatcherModel {
    /// The embedding table is held frozen; only conv and MLP weights train.
    pub fn new(config: MatcherConfig, embeddings: EmbeddingTable, seed: u64) -> Result<Self> {
        let flat = config.flattened_len()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |shape: &[usize], fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let n = shape.iter().product();
            Tensor::parameter(shape, (0..n).map(|_| dist.sample(&mut rng)).collect()).expect("positive dims")
        };
        let mut convs = Vec::new();
        let mut in_ch = 1;
        for c in &config.conv {
            let area = c.kernel * c.kernel;
            convs.push(ConvLayer {
                weight: uniform(&[c.channels, in_ch, c.kernel, c.kernel], in_ch * area, c.channels * area),
                bias: Tensor::parameter(&[c.channels], vec![0.0; c.channels]).expect("positive dims"),
            });
            in_ch = c.channels;
        }
        let h = config.mlp_hidden;
        let w1 = uniform(&[flat, h], flat, h);
        let w2 = uniform(&[h, 1], h, 1);
        Ok(Self {
            convs,
            w1,
            b1: Tensor::parameter(&[h], vec![0.0; h]).expect("positive dims"),
            w2,
            b2: Tensor::parameter(&[1], vec![0.0]).expect("positive dims"),
            config,
            embeddings,
        })
    }

    pub fn config(&self) -> &MatcherConfig {
        &self.config
    }

    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.embeddings
    }

    /// Similarity matrix for two spliced sequences of exactly `L` tokens.
    pub fn similarity(&self, celebrity_tokens: &[usize], brand_tokens: &[usize]) -> Result<Tensor> {
        let l = self.config.summary_max_tokens;
        for side in [celebrity_tokens, brand_tokens] {
            if side.len() != l {
                return Err(MatcherError::SequenceLength {
                    expected: l,
                    actual: side.len(),
                });
            }
        }
        similarity_matrix(&self.embeddings, celebrity_tokens, brand_tokens)
    }

    /// Builds a training/evaluation example from two spliced sequences.
    pub fn example(
        &self,
        celebrity_id: impl Into<String>,
        brand_id: impl Into<String>,
        celebrity_tokens: &[usize],
        brand_tokens: &[usize],
        label: Option<bool>,
    ) -> Result<MatchExample> {
        Ok(MatchExample {
            celebrity_id: celebrity_id.into(),
            brand_id: brand_id.into(),
            matrix: self.similarity(celebrity_tokens, brand_tokens)?,
            label,
        })
    }

    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("match.conv{}.w", i + 1), c.weight.clone()));
            out.push((format!("match.conv{}.b", i + 1), c.bias.clone()));
        }
        out.push(("match.mlp.w1".into(), self.w1.clone()));
        out.push(("match.mlp.b1".into(), self.b1.clone()));
        out.push(("match.mlp.w2".into(), self.w2.clone()));
        out.push(("match.mlp.b2".into(), self.b2.clone()));
        out
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(Tensor::numel).sum()
    }

    /// Pre-sigmoid score for one `L×L` similarity matrix, shape `[1]`.
    pub fn forward(&self, matrix: &Tensor) -> Result<Tensor> {
        let l = self.config.summary_max_tokens;
        if matrix.shape() != [l, l] {
            return Err(MatcherError::SequenceLength {
                expected: l,
                actual: matrix.shape().first().copied().unwrap_or(0),
            });
        }
        let mut x = matrix.reshape(&[1, l, l])?;
        for (c, p) in self.convs.iter().zip(&self.config.pool) {
            x = conv2d(&x, &c.weight, &c.bias, Activation::Relu)?;
            x = maxpool2d(&x, p.height, p.width)?;
        }
        let flat = x.reshape(&[1, self.w1.shape()[0]])?;
        let hidden = flat.matmul(&self.w1)?.add_bias(&self.b1)?.relu();
        let logit = hidden.matmul(&self.w2)?.add_bias(&self.b2)?;
        Ok(logit.reshape(&[1])?)
    }

    /// Match probability in `[0, 1]`.
    pub fn score(&self, matrix: &Tensor) -> Result<f64> {
        Ok(sigmoid_scalar(self.forward(matrix)?.item()))
    }

    /// `score ≥ threshold`.
    pub fn predict(&self, matrix: &Tensor) -> Result<bool> {
        Ok(self.score(matrix)? >= self.config.threshold)
    }

    fn example_loss(&self, ex: &MatchExample) -> Result<Tensor> {
        let label = if ex.label.ok_or(MatcherError::NoExamples)? { 1.0 } else { 0.0 };
        let logit = self.forward(&ex.matrix)?;
        Ok(bce_with_logits(&logit, &[label], Reduction::Sum, self.config.positive_weight)?)
    }

    /// One Adam step on a batch with summed BCE; returns the batch loss.
    pub fn train_batch(&self, batch: &[&MatchExample], optimizer: &mut AdamState) -> Result<f64> {
        let params = self.parameters();
        zero_grads(&params);
        let mut total = 0.0;
        for ex in batch {
            let loss = self.example_loss(ex)?;
            total += loss.item();
            loss.backward()?;
        }
        optimizer.step(&params)?;
        Ok(total)
    }

    /// Mini-batch training with a seeded shuffle each epoch. Every example
    /// must carry a label. Returns the summed loss per epoch.
    pub fn train(&self, examples: &[MatchExample], seed: u64) -> Result<Vec<f64>> {
        if examples.is_empty() {
            return Err(MatcherError::NoExamples);
        }
        if examples.iter().any(|e| e.label.is_none()) {
            return Err(MatcherError::InvalidConfig("training example without label".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut optimizer = AdamState::new(&self.parameters(), self.config.learning_rate);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut history = Vec::with_capacity(self.config.epochs);
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(self.config.batch_size) {
                let batch: Vec<&MatchExample> = chunk.iter().map(|&i| &examples[i]).collect();
                epoch_loss += self.train_batch(&batch, &mut optimizer)?;
            }
            if !epoch_loss.is_finite() {
                return Err(MatcherError::NonFinite { epoch });
            }
            log::debug!("matcher epoch {epoch}: loss {epoch_loss:.4}");
            history.push(epoch_loss);
        }
        Ok(history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Vocabulary;
    use std::sync::Arc;

    fn table() -> EmbeddingTable {
        let vocab = Arc::new(Vocabulary::from_tokens(["x", "y"]));
        EmbeddingTable::from_vectors(vocab, 2, (0..12).map(|i| i as f64 * 0.1).collect()).unwrap()
    }

    fn small_config() -> MatcherConfig {
        MatcherConfig {
            summary_max_tokens: 8,
            conv: vec![ConvSpec { kernel: 3, channels: 4 }],
            pool: vec![PoolSpec { height: 2, width: 2 }],
            mlp_hidden: 8,
            epochs: 60,
            learning_rate: 0.005,
            ..MatcherConfig::default()
        }
    }

    #[test]
    fn default_shapes() {
        let c = MatcherConfig::default();
        assert_eq!(c.stage_shapes().unwrap(), vec![(14, 14), (6, 6)]);
        assert_eq!(c.flattened_len().unwrap(), 360);
        let m = MatcherModel::new(c.clone(), table(), 0).unwrap();
        assert_eq!(m.parameter_count(), c.expected_parameter_count().unwrap());
        let logit = m.forward(&Tensor::zeros(&[32, 32])).unwrap();
        assert_eq!(logit.shape(), &[1]);
        assert!(m.similarity(&[4; 31], &[4; 32]).is_err());
        assert_eq!(m.similarity(&[4; 32], &[5; 32]).unwrap().shape(), &[32, 32]);
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let c = MatcherConfig {
            summary_max_tokens: 4,
            ..MatcherConfig::default()
        };
        assert!(matches!(MatcherModel::new(c, table(), 0), Err(MatcherError::InvalidConfig(_))));
        let c = MatcherConfig {
            pool: vec![PoolSpec { height: 2, width: 2 }],
            ..MatcherConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn splice_pads_and_truncates() {
        let s = vec![vec![5, 6], vec![7], vec![8, 9]];
        assert_eq!(splice_summaries(&s, 2, 6), vec![5, 6, SEP_ID, 7, PAD_ID, PAD_ID]);
        assert_eq!(splice_summaries(&s, 3, 4), vec![5, 6, SEP_ID, 7]);
        assert_eq!(splice_summaries(&s, 0, 2), vec![PAD_ID, PAD_ID]);
    }

    #[test]
    fn similarity_is_dot_product_and_zero_on_padding() {
        let vocab = Arc::new(Vocabulary::from_tokens(["x", "y"]));
        let mut values = vec![0.0; 6 * 2];
        values[8..12].copy_from_slice(&[1.0, 2.0, 3.0, -1.0]);
        let table = EmbeddingTable::from_vectors(vocab, 2, values).unwrap();
        let m = similarity_matrix(&table, &[4, 5, PAD_ID], &[5, 4, 4]).unwrap();
        assert_eq!(m.shape(), &[3, 3]);
        assert_eq!(m.at(&[0, 0]), 1.0);
        assert_eq!(m.at(&[0, 1]), 5.0);
        assert_eq!(m.at(&[1, 0]), 10.0);
        assert_eq!((0..3).map(|j| m.at(&[2, j])).sum::<f64>(), 0.0);
        assert!(similarity_matrix(&table, &[40], &[4]).is_err());
    }

    #[test]
    fn learns_separable_toy_problem() {
        let model = MatcherModel::new(small_config(), table(), 3).unwrap();
        let examples: Vec<MatchExample> = (0..8)
            .map(|i| {
                let pos = i % 2 == 0;
                let v = if pos { 1.0 } else { -1.0 };
                MatchExample {
                    celebrity_id: format!("c{i}"),
                    brand_id: "b".into(),
                    matrix: Tensor::new(&[8, 8], vec![v * (1.0 + i as f64 * 0.1); 64]).unwrap(),
                    label: Some(pos),
                }
            })
            .collect();
        let history = model.train(&examples, 1).unwrap();
        assert!(history.last().unwrap() < &(history[0] * 0.2), "{history:?}");
        for ex in &examples {
            let s = model.score(&ex.matrix).unwrap();
            assert!((0.0..=1.0).contains(&s));
            assert_eq!(model.predict(&ex.matrix).unwrap(), ex.label.unwrap());
        }
    }

    #[test]
    fn threshold_tie_predicts_positive() {
        let c = MatcherConfig {
            threshold: 0.5,
            ..small_config()
        };
        let model = MatcherModel::new(c, table(), 0).unwrap();
        for (_, p) in model.named_parameters() {
            p.set_data(&vec![0.0; p.numel()]).unwrap();
        }
        let m = Tensor::zeros(&[8, 8]);
        assert_eq!(model.score(&m).unwrap(), 0.5);
        assert!(model.predict(&m).unwrap());
    }

    #[test]
    fn unlabeled_training_is_rejected() {
        let model = MatcherModel::new(small_config(), table(), 0).unwrap();
        let ex = MatchExample {
            celebrity_id: "c".into(),
            brand_id: "b".into(),
            matrix: Tensor::zeros(&[8, 8]),
            label: None,
        };
        assert!(model.train(&[ex], 0).is_err());
        assert!(matches!(model.train(&[], 0), Err(MatcherError::NoExamples)));
    }
}
