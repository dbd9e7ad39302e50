//! Transformer encoder–decoder summarizer with greedy decoding.
//!
//! Layers use post-norm residuals (`Norm(x + Sublayer(x))`). Token and
//! learned position embeddings are summed at the input. The decoder starts
//! from `[CLS]` and generation stops at `[SEP]` or `max_decode_len` tokens.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::EmbeddingTable;
use crate::tensor::{
    self, attention, cross_entropy, layer_norm, zero_grads, Activation, AdamState, AttentionMask, Reduction,
    Tensor, TensorError, LAYER_NORM_EPS,
};
use crate::text::{EntityCorpus, Vocabulary, CLS_ID, PAD_ID, SEP_ID};

#[derive(Debug, Error)]
pub enum SummarizerError {
    #[error("invalid summarizer config: {0}")]
    InvalidConfig(String),
    #[error("source sequence is empty")]
    EmptySource,
    #[error("decoder prefix is empty")]
    EmptyPrefix,
    #[error("decoder prefix must start with [CLS]")]
    PrefixWithoutCls,
    #[error("sequence of length {len} exceeds limit {max}")]
    TooLong { len: usize, max: usize },
    #[error("target of {len} tokens exceeds max_decode_len {max}")]
    TargetTooLong { len: usize, max: usize },
    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    BadTokenId { id: usize, vocab: usize },
    #[error("embedding table does not fit the model: {0}")]
    EmbeddingMismatch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, SummarizerError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizerConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_source_len: usize,
    pub max_decode_len: usize,
    pub vocab_size: usize,
    pub interlayer_activation: Activation,
    /// Encoder and decoder read from one token embedding table.
    #[serde(default = "default_true")]
    pub share_embeddings: bool,
}

fn default_true() -> bool {
    true
}

impl SummarizerConfig {
    /// Small preset exercised by tests and the default pipeline.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            num_layers: 2,
            hidden_dim: 64,
            num_heads: 4,
            ffn_dim: 128,
            max_source_len: 128,
            max_decode_len: 30,
            vocab_size,
            interlayer_activation: Activation::Gelu,
            share_embeddings: true,
        }
    }

    /// Full-size preset: 12 layers, 768 hidden, 12 heads, 512 positions,
    /// 100 decode steps, GELU. Constructible, but far beyond desk scale.
    pub fn paper(vocab_size: usize) -> Self {
        Self {
            num_layers: 12,
            hidden_dim: 768,
            num_heads: 12,
            ffn_dim: 3072,
            max_source_len: 512,
            max_decode_len: 100,
            vocab_size,
            interlayer_activation: Activation::Gelu,
            share_embeddings: true,
        }
    }

    pub fn preset(name: &str, vocab_size: usize) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk(vocab_size)),
            "paper" => Some(Self::paper(vocab_size)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(SummarizerError::InvalidConfig(m));
        if self.num_layers == 0 || self.hidden_dim == 0 || self.num_heads == 0 || self.ffn_dim == 0 {
            return fail("layer count and dimensions must be positive".into());
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return fail(format!(
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            ));
        }
        if self.max_decode_len == 0 || self.max_source_len == 0 {
            return fail("max_source_len and max_decode_len must be at least 1".into());
        }
        if self.vocab_size <= SEP_ID {
            return fail(format!("vocab_size {} lacks the special tokens", self.vocab_size));
        }
        Ok(())
    }

    /// Rows of the learned position table.
    pub fn max_positions(&self) -> usize {
        self.max_source_len.max(self.max_decode_len + 1)
    }

    /// Closed-form parameter count for this configuration.
    pub fn expected_parameter_count(&self) -> usize {
        let (d, f, v, l) = (self.hidden_dim, self.ffn_dim, self.vocab_size, self.num_layers);
        let attention = 4 * d * d;
        let norm = 2 * d;
        let ffn = 2 * d * f + f + d;
        let encoder_layer = attention + norm + ffn + norm;
        let decoder_layer = 2 * attention + 3 * norm + ffn;
        let token_tables = if self.share_embeddings { 1 } else { 2 };
        token_tables * v * d + self.max_positions() * d + l * (encoder_layer + decoder_layer) + d * v
    }
}

struct AttentionBlock {
    wq: Tensor,
    wk: Tensor,
    wv: Tensor,
    wo: Tensor,
}

struct FeedForward {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

struct Norm {
    gain: Tensor,
    bias: Tensor,
}

struct EncoderLayer {
    self_attn: AttentionBlock,
    norm1: Norm,
    ffn: FeedForward,
    norm2: Norm,
}

struct DecoderLayer {
    self_attn: AttentionBlock,
    norm1: Norm,
    cross_attn: AttentionBlock,
    norm2: Norm,
    ffn: FeedForward,
    norm3: Norm,
}

/// Encoder output plus the source padding mask needed by cross-attention.
pub struct Encoded {
    pub states: Tensor,
    pub key_valid: Vec<bool>,
}

/// Collected attention weight matrices, in evaluation order.
pub type AttentionTrace = Vec<Tensor>;

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn xavier(&mut self, rows: usize, cols: usize) -> Tensor {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let data = (0..rows * cols).map(|_| dist.sample(&mut self.rng)).collect();
        Tensor::parameter(&[rows, cols], data).expect("positive dims")
    }

    fn normal(&mut self, rows: usize, cols: usize, std: f64) -> Tensor {
        let dist = Normal::new(0.0, std).expect("finite std");
        let data = (0..rows * cols).map(|_| dist.sample(&mut self.rng)).collect();
        Tensor::parameter(&[rows, cols], data).expect("positive dims")
    }

    fn constant(n: usize, value: f64) -> Tensor {
        Tensor::parameter(&[n], vec![value; n]).expect("positive dims")
    }

    fn attention(&mut self, d: usize) -> AttentionBlock {
        AttentionBlock {
            wq: self.xavier(d, d),
            wk: self.xavier(d, d),
            wv: self.xavier(d, d),
            wo: self.xavier(d, d),
        }
    }

    fn ffn(&mut self, d: usize, f: usize) -> FeedForward {
        FeedForward {
            w1: self.xavier(d, f),
            b1: Self::constant(f, 0.0),
            w2: self.xavier(f, d),
            b2: Self::constant(d, 0.0),
        }
    }

    fn norm(d: usize) -> Norm {
        Norm {
            gain: Self::constant(d, 1.0),
            bias: Self::constant(d, 0.0),
        }
    }
}

pub struct SummarizerModel {
    config: SummarizerConfig,
    vocab: Arc<Vocabulary>,
    token_embedding: Tensor,
    decoder_token_embedding: Option<Tensor>,
    position_embedding: Tensor,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    out_proj: Tensor,
    /// Reduction for the token cross-entropy; mean over target tokens by default.
    pub loss_reduction: Reduction,
}

impl SummarizerModel {
    pub fn new(config: SummarizerConfig, vocab: Arc<Vocabulary>, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab.len() != config.vocab_size {
            return Err(SummarizerError::InvalidConfig(format!(
                "vocab_size {} but vocabulary holds {} tokens",
                config.vocab_size,
                vocab.len()
            )));
        }
        let (d, f, v) = (config.hidden_dim, config.ffn_dim, config.vocab_size);
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let emb_std = 1.0 / (d as f64).sqrt();
        let token_embedding = init.normal(v, d, emb_std);
        let decoder_token_embedding = (!config.share_embeddings).then(|| init.normal(v, d, emb_std));
        let position_embedding = init.normal(config.max_positions(), d, emb_std);
        let encoder = (0..config.num_layers)
            .map(|_| EncoderLayer {
                self_attn: init.attention(d),
                norm1: Init::norm(d),
                ffn: init.ffn(d, f),
                norm2: Init::norm(d),
            })
            .collect();
        let decoder = (0..config.num_layers)
            .map(|_| DecoderLayer {
                self_attn: init.attention(d),
                norm1: Init::norm(d),
                cross_attn: init.attention(d),
                norm2: Init::norm(d),
                ffn: init.ffn(d, f),
                norm3: Init::norm(d),
            })
            .collect();
        let out_proj = init.xavier(d, v);
        let model = Self {
            config,
            vocab,
            token_embedding,
            decoder_token_embedding,
            position_embedding,
            encoder,
            decoder,
            out_proj,
            loss_reduction: Reduction::Mean,
        };
        log::debug!("summarizer initialized with {} parameters", model.parameter_count());
        Ok(model)
    }

    pub fn config(&self) -> &SummarizerConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    /// Copies word vectors into the token embedding table(s).
    pub fn init_token_embeddings(&self, table: &EmbeddingTable) -> Result<()> {
        if table.dim() != self.config.hidden_dim || table.vocab().len() != self.config.vocab_size {
            return Err(SummarizerError::EmbeddingMismatch(format!(
                "table is {}×{}, model expects {}×{}",
                table.vocab().len(),
                table.dim(),
                self.config.vocab_size,
                self.config.hidden_dim
            )));
        }
        let values = table.vectors().to_vec();
        self.token_embedding.set_data(&values)?;
        if let Some(dec) = &self.decoder_token_embedding {
            dec.set_data(&values)?;
        }
        Ok(())
    }

    /// Every trainable tensor with its checkpoint name, in a fixed order.
    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![("emb.tokens".to_string(), self.token_embedding.clone())];
        if let Some(dec) = &self.decoder_token_embedding {
            out.push(("emb.dec_tokens".into(), dec.clone()));
        }
        out.push(("emb.positions".into(), self.position_embedding.clone()));
        let attn = |out: &mut Vec<(String, Tensor)>, prefix: &str, a: &AttentionBlock| {
            for (role, t) in [("wq", &a.wq), ("wk", &a.wk), ("wv", &a.wv), ("wo", &a.wo)] {
                out.push((format!("{prefix}.{role}"), t.clone()));
            }
        };
        let norm = |out: &mut Vec<(String, Tensor)>, prefix: &str, n: &Norm| {
            out.push((format!("{prefix}.gain"), n.gain.clone()));
            out.push((format!("{prefix}.bias"), n.bias.clone()));
        };
        let ffn = |out: &mut Vec<(String, Tensor)>, prefix: &str, f: &FeedForward| {
            for (role, t) in [("w1", &f.w1), ("b1", &f.b1), ("w2", &f.w2), ("b2", &f.b2)] {
                out.push((format!("{prefix}.{role}"), t.clone()));
            }
        };
        for (i, layer) in self.encoder.iter().enumerate() {
            attn(&mut out, &format!("enc.{i}.self_attn"), &layer.self_attn);
            norm(&mut out, &format!("enc.{i}.norm1"), &layer.norm1);
            ffn(&mut out, &format!("enc.{i}.ffn"), &layer.ffn);
            norm(&mut out, &format!("enc.{i}.norm2"), &layer.norm2);
        }
        for (i, layer) in self.decoder.iter().enumerate() {
            attn(&mut out, &format!("dec.{i}.self_attn"), &layer.self_attn);
            norm(&mut out, &format!("dec.{i}.norm1"), &layer.norm1);
            attn(&mut out, &format!("dec.{i}.cross_attn"), &layer.cross_attn);
            norm(&mut out, &format!("dec.{i}.norm2"), &layer.norm2);
            ffn(&mut out, &format!("dec.{i}.ffn"), &layer.ffn);
            norm(&mut out, &format!("dec.{i}.norm3"), &layer.norm3);
        }
        out.push(("out_proj".into(), self.out_proj.clone()));
        out
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(Tensor::numel).sum()
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&id| id >= self.config.vocab_size) {
            Some(&id) => Err(SummarizerError::BadTokenId {
                id,
                vocab: self.config.vocab_size,
            }),
            None => Ok(()),
        }
    }

    fn embed(&self, table: &Tensor, ids: &[usize]) -> Result<Tensor> {
        let positions: Vec<usize> = (0..ids.len()).collect();
        let tok = tensor::embedding(table, ids)?;
        let pos = tensor::embedding(&self.position_embedding, &positions)?;
        Ok(tok.add(&pos)?)
    }

    fn multi_head(
        &self,
        block: &AttentionBlock,
        queries: &Tensor,
        keys_values: &Tensor,
        mask: &AttentionMask,
        mut trace: Option<&mut AttentionTrace>,
    ) -> Result<Tensor> {
        let q = queries.matmul(&block.wq)?;
        let k = keys_values.matmul(&block.wk)?;
        let v = keys_values.matmul(&block.wv)?;
        let heads = self.config.num_heads;
        let dh = self.config.hidden_dim / heads;
        let mut outputs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q.clone(), k.clone(), v.clone())
            } else {
                let (a, b) = (h * dh, (h + 1) * dh);
                (q.slice_cols(a, b)?, k.slice_cols(a, b)?, v.slice_cols(a, b)?)
            };
            let out = attention(&qh, &kh, &vh, Some(mask))?;
            if let Some(t) = trace.as_deref_mut() {
                t.push(out.weights.clone());
            }
            outputs.push(out.output);
        }
        let joined = if heads == 1 {
            outputs.pop().expect("one head")
        } else {
            Tensor::concat_cols(&outputs)?
        };
        Ok(joined.matmul(&block.wo)?)
    }

    fn feed_forward(&self, ffn: &FeedForward, x: &Tensor) -> Result<Tensor> {
        let hidden = x.matmul(&ffn.w1)?.add_bias(&ffn.b1)?;
        let hidden = self.config.interlayer_activation.apply(&hidden);
        Ok(hidden.matmul(&ffn.w2)?.add_bias(&ffn.b2)?)
    }

    fn norm(n: &Norm, x: &Tensor) -> Result<Tensor> {
        Ok(layer_norm(x, &n.gain, &n.bias, LAYER_NORM_EPS)?)
    }

    pub fn encode(&self, source: &[usize]) -> Result<Encoded> {
        self.encode_traced(source, None)
    }

    /// Like [`encode`](Self::encode), appending every self-attention weight
    /// matrix (layer-major, head-minor) to `trace`.
    pub fn encode_traced(&self, source: &[usize], mut trace: Option<&mut AttentionTrace>) -> Result<Encoded> {
        if source.is_empty() {
            return Err(SummarizerError::EmptySource);
        }
        if source.len() > self.config.max_source_len {
            return Err(SummarizerError::TooLong {
                len: source.len(),
                max: self.config.max_source_len,
            });
        }
        self.check_ids(source)?;
        let key_valid: Vec<bool> = source.iter().map(|&id| id != PAD_ID).collect();
        if !key_valid.iter().any(|&v| v) {
            return Err(SummarizerError::EmptySource);
        }
        let mask = AttentionMask::key_padding(source.len(), &key_valid);
        let mut x = self.embed(&self.token_embedding, source)?;
        for layer in &self.encoder {
            let a = self.multi_head(&layer.self_attn, &x, &x, &mask, trace.as_deref_mut())?;
            x = Self::norm(&layer.norm1, &x.add(&a)?)?;
            let f = self.feed_forward(&layer.ffn, &x)?;
            x = Self::norm(&layer.norm2, &x.add(&f)?)?;
        }
        Ok(Encoded { states: x, key_valid })
    }

    /// Next-token logits for every prefix position, `len(prefix)×vocab`.
    pub fn decode_logits(&self, encoded: &Encoded, prefix: &[usize]) -> Result<Tensor> {
        self.decode_logits_traced(encoded, prefix, None)
    }

    /// Appends, per layer, each head's self-attention then each head's
    /// cross-attention weights to `trace`.
    pub fn decode_logits_traced(
        &self,
        encoded: &Encoded,
        prefix: &[usize],
        mut trace: Option<&mut AttentionTrace>,
    ) -> Result<Tensor> {
        match prefix.first() {
            None => return Err(SummarizerError::EmptyPrefix),
            Some(&first) if first != CLS_ID => return Err(SummarizerError::PrefixWithoutCls),
            _ => {}
        }
        if prefix.len() > self.config.max_positions() {
            return Err(SummarizerError::TooLong {
                len: prefix.len(),
                max: self.config.max_positions(),
            });
        }
        self.check_ids(prefix)?;
        let t = prefix.len();
        let causal = AttentionMask::causal(t);
        let cross = AttentionMask::key_padding(t, &encoded.key_valid);
        let table = self.decoder_token_embedding.as_ref().unwrap_or(&self.token_embedding);
        let mut y = self.embed(table, prefix)?;
        for layer in &self.decoder {
            let a = self.multi_head(&layer.self_attn, &y, &y, &causal, trace.as_deref_mut())?;
            y = Self::norm(&layer.norm1, &y.add(&a)?)?;
            let c = self.multi_head(&layer.cross_attn, &y, &encoded.states, &cross, trace.as_deref_mut())?;
            y = Self::norm(&layer.norm2, &y.add(&c)?)?;
            let f = self.feed_forward(&layer.ffn, &y)?;
            y = Self::norm(&layer.norm3, &y.add(&f)?)?;
        }
        Ok(y.matmul(&self.out_proj)?)
    }

    /// Logits for the token following `prefix`, shape `[vocab]`.
    pub fn decode_step(&self, encoded: &Encoded, prefix: &[usize]) -> Result<Tensor> {
        let logits = self.decode_logits(encoded, prefix)?;
        let v = self.config.vocab_size;
        let last = logits.data()[(prefix.len() - 1) * v..].to_vec();
        Ok(Tensor::new(&[v], last)?)
    }

    /// Greedy decoding from `[CLS]`. The result excludes `[CLS]` and `[SEP]`
    /// and holds at most `max_decode_len` tokens. Sources longer than
    /// `max_source_len` are truncated to their head.
    pub fn generate_greedy(&self, source: &[usize]) -> Result<Vec<usize>> {
        let source = &source[..source.len().min(self.config.max_source_len)];
        let encoded = self.encode(source)?;
        let mut prefix = vec![CLS_ID];
        let mut output = Vec::new();
        while output.len() < self.config.max_decode_len {
            let logits = self.decode_step(&encoded, &prefix)?;
            let next = argmax(&logits.data());
            if next == SEP_ID {
                break;
            }
            output.push(next);
            prefix.push(next);
        }
        Ok(output)
    }

    /// Teacher-forced cross-entropy for one (source, target) pair. `target`
    /// holds the summary tokens only; `[CLS]`/`[SEP]` are added here.
    pub fn loss(&self, source: &[usize], target: &[usize]) -> Result<Tensor> {
        if target.len() > self.config.max_decode_len {
            return Err(SummarizerError::TargetTooLong {
                len: target.len(),
                max: self.config.max_decode_len,
            });
        }
        let source = &source[..source.len().min(self.config.max_source_len)];
        let encoded = self.encode(source)?;
        let mut decoder_input = Vec::with_capacity(target.len() + 1);
        decoder_input.push(CLS_ID);
        decoder_input.extend_from_slice(target);
        let mut labels = target.to_vec();
        labels.push(SEP_ID);
        let logits = self.decode_logits(&encoded, &decoder_input)?;
        Ok(cross_entropy(&logits, &labels, Some(PAD_ID), self.loss_reduction)?)
    }

    /// One forward/backward/Adam step on a single pair; returns the loss.
    pub fn train_step(&self, source: &[usize], target: &[usize], optimizer: &mut AdamState) -> Result<f64> {
        self.train_batch(&[(source, target)], optimizer)
    }

    /// One Adam step on the mean loss of a batch of pairs; returns that mean.
    pub fn train_batch(&self, batch: &[(&[usize], &[usize])], optimizer: &mut AdamState) -> Result<f64> {
        let params = self.parameters();
        zero_grads(&params);
        let scale = 1.0 / batch.len().max(1) as f64;
        let mut total = 0.0;
        for (source, target) in batch {
            let loss = self.loss(source, target)?.scale(scale);
            total += loss.item();
            loss.backward()?;
        }
        optimizer.step(&params)?;
        Ok(total)
    }

    pub fn optimizer(&self, learning_rate: f64) -> AdamState {
        AdamState::new(&self.parameters(), learning_rate)
    }

    /// Greedy summaries of the first `max_docs` documents, in corpus order.
    pub fn summarize_entity(&self, corpus: &EntityCorpus, max_docs: usize) -> Result<Vec<Vec<usize>>> {
        corpus
            .documents
            .iter()
            .take(max_docs.max(1))
            .map(|doc| self.generate_greedy(&self.vocab.encode(&doc.tokens)))
            .collect()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(vocab: usize) -> SummarizerConfig {
        SummarizerConfig {
            num_layers: 1,
            hidden_dim: 8,
            num_heads: 2,
            ffn_dim: 12,
            max_source_len: 16,
            max_decode_len: 6,
            vocab_size: vocab,
            interlayer_activation: Activation::Gelu,
            share_embeddings: true,
        }
    }

    fn vocab() -> Arc<Vocabulary> {
        Arc::new(Vocabulary::from_tokens(["a", "b", "c", "d", "e", "f"]))
    }

    fn model() -> SummarizerModel {
        let v = vocab();
        SummarizerModel::new(tiny_config(v.len()), v, 11).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_config(10);
        c.num_heads = 3;
        assert!(c.validate().is_err());
        let mut c = tiny_config(10);
        c.max_decode_len = 0;
        assert!(c.validate().is_err());
        assert!(SummarizerConfig::desk(100).validate().is_ok());
        assert!(SummarizerConfig::paper(100).validate().is_ok());
    }

    #[test]
    fn parameter_count_matches_formula() {
        let m = model();
        assert_eq!(m.parameter_count(), m.config().expected_parameter_count());
        let v = vocab();
        let mut c = tiny_config(v.len());
        c.share_embeddings = false;
        c.num_layers = 2;
        let m = SummarizerModel::new(c.clone(), v, 0).unwrap();
        assert_eq!(m.parameter_count(), c.expected_parameter_count());
    }

    #[test]
    fn paper_preset_count_is_analytic() {
        // 12 × (encoder + decoder) layers at d=768, f=3072, plus embeddings.
        let c = SummarizerConfig::paper(21128);
        let (d, f) = (768usize, 3072usize);
        let enc = 4 * d * d + 2 * d * f + f + 5 * d;
        let dec = 8 * d * d + 2 * d * f + f + 7 * d;
        assert_eq!(c.expected_parameter_count(), 21128 * d + 512 * d + 12 * (enc + dec) + d * 21128);
    }

    #[test]
    fn encode_shapes_and_errors() {
        let m = model();
        assert_eq!(m.encode(&[5]).unwrap().states.shape(), &[1, 8]);
        assert!(matches!(m.encode(&[]), Err(SummarizerError::EmptySource)));
        assert!(matches!(m.encode(&[99]), Err(SummarizerError::BadTokenId { .. })));
    }

    #[test]
    fn encoder_attention_rows_sum_to_one_over_real_tokens() {
        let m = model();
        let mut trace = AttentionTrace::new();
        m.encode_traced(&[4, 5, 6, PAD_ID, PAD_ID], Some(&mut trace)).unwrap();
        assert_eq!(trace.len(), 2);
        for w in &trace {
            for i in 0..5 {
                let row: Vec<f64> = (0..5).map(|j| w.at(&[i, j])).collect();
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert_eq!(row[3], 0.0);
                assert_eq!(row[4], 0.0);
            }
        }
    }

    #[test]
    fn extra_padding_leaves_real_positions_unchanged() {
        let m = model();
        let short = m.encode(&[4, 7, 5, PAD_ID]).unwrap().states.to_vec();
        let long = m.encode(&[4, 7, 5, PAD_ID, PAD_ID, PAD_ID]).unwrap().states.to_vec();
        assert_eq!(short[..3 * 8], long[..3 * 8]);
    }

    #[test]
    fn first_decode_step_attends_only_to_cls() {
        let m = model();
        let enc = m.encode(&[4, 5]).unwrap();
        let mut trace = AttentionTrace::new();
        let logits = m.decode_logits_traced(&enc, &[CLS_ID], Some(&mut trace)).unwrap();
        assert_eq!(logits.shape(), &[1, m.config().vocab_size]);
        // Self-attention heads come first within the layer.
        assert_eq!(trace[0].to_vec(), vec![1.0]);
        assert_eq!(trace[1].to_vec(), vec![1.0]);
        assert_eq!(m.decode_step(&enc, &[CLS_ID]).unwrap().shape(), &[m.config().vocab_size]);
    }

    #[test]
    fn decoder_is_causal() {
        let m = model();
        let enc = m.encode(&[4, 5, 6]).unwrap();
        let short = m.decode_logits(&enc, &[CLS_ID, 5, 6]).unwrap().to_vec();
        let long = m.decode_logits(&enc, &[CLS_ID, 5, 6, 8]).unwrap().to_vec();
        assert_eq!(short[..], long[..short.len()]);
    }

    #[test]
    fn prefix_errors() {
        let m = model();
        let enc = m.encode(&[4]).unwrap();
        assert!(matches!(m.decode_step(&enc, &[]), Err(SummarizerError::EmptyPrefix)));
        assert!(matches!(m.decode_step(&enc, &[4]), Err(SummarizerError::PrefixWithoutCls)));
    }

    #[test]
    fn forced_separator_gives_empty_summary() {
        let m = model();
        let d = m.config().hidden_dim;
        let v = m.config().vocab_size;
        // Final norm emits a constant row; only the [SEP] column sees it.
        let named = m.named_parameters();
        let get = |n: &str| named.iter().find(|(k, _)| k == n).unwrap().1.clone();
        get("dec.0.norm3.gain").set_data(&vec![0.0; d]).unwrap();
        get("dec.0.norm3.bias").set_data(&vec![1.0; d]).unwrap();
        let mut w = vec![0.0; d * v];
        for r in 0..d {
            w[r * v + SEP_ID] = 1.0;
        }
        get("out_proj").set_data(&w).unwrap();
        assert!(m.generate_greedy(&[4, 5, 6]).unwrap().is_empty());
    }

    #[test]
    fn generation_respects_length_cap() {
        let m = model();
        for src in [&[4usize][..], &[5, 6, 7, 8], &[9; 30]] {
            assert!(m.generate_greedy(src).unwrap().len() <= m.config().max_decode_len);
        }
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let run = || {
            let m = model();
            let mut opt = m.optimizer(0.01);
            (0..50).map(|_| m.train_step(&[4, 5, 6, 7], &[6, 5], &mut opt).unwrap()).collect::<Vec<_>>()
        };
        let a = run();
        assert!(a[49] < a[0] * 0.5, "{} -> {}", a[0], a[49]);
        assert_eq!(a, run());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let m = model();
        let before: Vec<Vec<f64>> = m.parameters().iter().map(Tensor::to_vec).collect();
        let mut opt = m.optimizer(0.0);
        m.train_step(&[4, 5], &[6], &mut opt).unwrap();
        let after: Vec<Vec<f64>> = m.parameters().iter().map(Tensor::to_vec).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn target_too_long_is_rejected() {
        let m = model();
        let mut opt = m.optimizer(0.01);
        assert!(matches!(
            m.train_step(&[4], &[5; 7], &mut opt),
            Err(SummarizerError::TargetTooLong { len: 7, max: 6 })
        ));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
