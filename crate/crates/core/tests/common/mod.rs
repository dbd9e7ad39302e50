//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use bcm::tensor::{zero_grads, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn param(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::parameter(shape, uniform(rng, n, 1.0)).expect("valid shape")
}

/// Contracts `out` against fixed random weights so every output element
/// contributes a distinct amount to the scalar loss.
pub fn weighted_sum(out: &Tensor, seed: u64) -> Tensor {
    let mut r = rng(seed ^ 0x5eed);
    let w = Tensor::new(out.shape(), uniform(&mut r, out.numel(), 1.0)).expect("same shape");
    out.mul(&w).expect("same shape").sum()
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub probes: usize,
    pub worst_relative: f64,
}

/// Compares backprop gradients with central differences at `probes` randomly
/// chosen parameter entries.
///
/// An entry passes when its relative error is within `tol`, or when the
/// absolute gap is under 1e-8 so the ratio is noise. `worst_relative` only
/// counts entries whose gradient exceeds 1e-6 in magnitude.
pub fn gradcheck(
    params: &[Tensor],
    loss: impl Fn() -> Tensor,
    probes: usize,
    tol: f64,
    seed: u64,
) -> Result<GradCheck, String> {
    zero_grads(params);
    loss().backward().map_err(|e| e.to_string())?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let total: usize = params.iter().map(Tensor::numel).sum();
    let mut r = rng(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let mut flat = r.gen_range(0..total);
        let mut pi = 0;
        while flat >= params[pi].numel() {
            flat -= params[pi].numel();
            pi += 1;
        }
        let p = &params[pi];
        let original = p.to_vec()[flat];
        p.update_data(|d| d[flat] = original + h);
        let plus = loss().item();
        p.update_data(|d| d[flat] = original - h);
        let minus = loss().item();
        p.update_data(|d| d[flat] = original);

        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[pi][flat];
        let gap = (a - numeric).abs();
        let scale = a.abs().max(numeric.abs());
        let rel = if scale > 0.0 { gap / scale } else { 0.0 };
        if scale > 1e-6 {
            worst = worst.max(rel);
        }
        if rel > tol && gap > 1e-8 {
            return Err(format!(
                "parameter {pi} entry {flat}: backprop {a:.10e}, finite difference {numeric:.10e}, relative error {rel:.3e}"
            ));
        }
    }
    Ok(GradCheck {
        probes,
        worst_relative: worst,
    })
}

pub struct GradCase {
    pub name: &'static str,
    pub tol: f64,
    pub params: Vec<Tensor>,
    pub loss: Box<dyn Fn() -> Tensor>,
}

fn case(name: &'static str, tol: f64, params: Vec<Tensor>, loss: impl Fn() -> Tensor + 'static) -> GradCase {
    GradCase {
        name,
        tol,
        params,
        loss: Box::new(loss),
    }
}

/// One case per differentiable op, plus the two model losses.
pub fn gradient_cases(seed: u64) -> Vec<GradCase> {
    use bcm::tensor::{
        attention, bce_with_logits, conv2d, cross_entropy, embedding, layer_norm, maxpool2d, softmax, Activation,
        AttentionMask, Reduction,
    };

    let r = &mut rng(seed);
    let mut cases = Vec::new();
    let tight = 1e-4;
    let gelu = 1e-3;

    let (a, b) = (param(r, &[3, 4]), param(r, &[3, 4]));
    cases.push(case("add", tight, vec![a.clone(), b.clone()], {
        let (a, b) = (a.clone(), b.clone());
        move || weighted_sum(&a.add(&b).unwrap(), 1)
    }));
    cases.push(case("sub", tight, vec![a.clone(), b.clone()], {
        let (a, b) = (a.clone(), b.clone());
        move || weighted_sum(&a.sub(&b).unwrap(), 2)
    }));
    cases.push(case("mul", tight, vec![a.clone(), b.clone()], {
        let (a, b) = (a.clone(), b.clone());
        move || weighted_sum(&a.mul(&b).unwrap(), 3)
    }));
    cases.push(case("scale", tight, vec![a.clone()], {
        let a = a.clone();
        move || weighted_sum(&a.scale(-1.7), 4)
    }));
    let bias = param(r, &[4]);
    cases.push(case("add_bias", tight, vec![a.clone(), bias.clone()], {
        let (a, bias) = (a.clone(), bias.clone());
        move || weighted_sum(&a.add_bias(&bias).unwrap(), 5)
    }));
    cases.push(case("sum", tight, vec![a.clone()], {
        let a = a.clone();
        move || a.mul(&a).unwrap().sum()
    }));
    cases.push(case("mean", tight, vec![a.clone()], {
        let a = a.clone();
        move || a.mul(&a).unwrap().mean()
    }));
    cases.push(case("reshape", tight, vec![a.clone()], {
        let a = a.clone();
        move || weighted_sum(&a.reshape(&[2, 6]).unwrap().tanh(), 6)
    }));
    cases.push(case("flatten", tight, vec![a.clone()], {
        let a = a.clone();
        move || weighted_sum(&a.flatten().sigmoid(), 7)
    }));
    cases.push(case("transpose", tight, vec![a.clone()], {
        let a = a.clone();
        move || weighted_sum(&a.transpose().unwrap().tanh(), 8)
    }));
    let m = param(r, &[4, 5]);
    cases.push(case("matmul", tight, vec![a.clone(), m.clone()], {
        let (a, m) = (a.clone(), m.clone());
        move || weighted_sum(&a.matmul(&m).unwrap(), 9)
    }));
    cases.push(case("slice_cols", tight, vec![m.clone()], {
        let m = m.clone();
        move || weighted_sum(&m.slice_cols(1, 4).unwrap().tanh(), 10)
    }));
    cases.push(case("concat_cols", tight, vec![a.clone(), m.clone()], {
        let (a, m) = (a.clone(), m.clone());
        move || weighted_sum(&bcm::tensor::Tensor::concat_cols(&[a.transpose().unwrap(), m.clone()]).unwrap().tanh(), 11)
    }));
    cases.push(case("relu", tight, vec![a.clone()], {
        let a = a.clone();
        move || weighted_sum(&a.relu(), 12)
    }));
    cases.push(case("gelu", gelu, vec![a.clone()], {
        let a = a.clone();
        move || weighted_sum(&a.gelu(), 13)
    }));
    cases.push(case("sigmoid", tight, vec![a.clone()], {
        let a = a.clone();
        move || weighted_sum(&a.sigmoid(), 14)
    }));
    cases.push(case("tanh", tight, vec![a.clone()], {
        let a = a.clone();
        move || weighted_sum(&a.tanh(), 15)
    }));
    cases.push(case("softmax rows", tight, vec![a.clone()], {
        let a = a.clone();
        move || weighted_sum(&softmax(&a, 1).unwrap(), 16)
    }));
    cases.push(case("softmax columns", tight, vec![a.clone()], {
        let a = a.clone();
        move || weighted_sum(&softmax(&a, 0).unwrap(), 17)
    }));

    let (q, k, v) = (param(r, &[4, 6]), param(r, &[4, 6]), param(r, &[4, 3]));
    cases.push(case("attention", tight, vec![q.clone(), k.clone(), v.clone()], {
        let (q, k, v) = (q.clone(), k.clone(), v.clone());
        move || weighted_sum(&attention(&q, &k, &v, None).unwrap().output, 18)
    }));
    cases.push(case("masked attention", tight, vec![q.clone(), k.clone(), v.clone()], {
        let (q, k, v) = (q.clone(), k.clone(), v.clone());
        let mask = AttentionMask::causal(4).and(&AttentionMask::key_padding(4, &[true, true, true, false]));
        move || weighted_sum(&attention(&q, &k, &v, Some(&mask)).unwrap().output, 19)
    }));

    let (gain, shift) = (param(r, &[4]), param(r, &[4]));
    cases.push(case("layer_norm", tight, vec![a.clone(), gain.clone(), shift.clone()], {
        let (a, gain, shift) = (a.clone(), gain.clone(), shift.clone());
        move || weighted_sum(&layer_norm(&a, &gain, &shift, 1e-5).unwrap(), 20)
    }));

    let (img, kern, kb) = (param(r, &[2, 7, 6]), param(r, &[3, 2, 3, 2]), param(r, &[3]));
    for (name, act, tol, s) in [
        ("conv2d", Activation::Identity, tight, 21),
        ("conv2d relu", Activation::Relu, tight, 22),
        ("conv2d gelu", Activation::Gelu, gelu, 23),
    ] {
        let (img, kern, kb) = (img.clone(), kern.clone(), kb.clone());
        cases.push(case(name, tol, vec![img.clone(), kern.clone(), kb.clone()], move || {
            weighted_sum(&conv2d(&img, &kern, &kb, act).unwrap(), s)
        }));
    }
    cases.push(case("maxpool2d", tight, vec![img.clone()], {
        let img = img.clone();
        move || weighted_sum(&maxpool2d(&img, 2, 3).unwrap(), 24)
    }));

    let table = param(r, &[6, 3]);
    cases.push(case("embedding", tight, vec![table.clone()], {
        let table = table.clone();
        move || weighted_sum(&embedding(&table, &[4, 1, 4, 0, 5]).unwrap().tanh(), 25)
    }));

    let logits = param(r, &[6]);
    for (name, reduction, weight) in [
        ("bce sum", Reduction::Sum, 1.0),
        ("bce mean weighted", Reduction::Mean, 2.5),
    ] {
        let logits = logits.clone();
        cases.push(case(name, tight, vec![logits.clone()], move || {
            bce_with_logits(&logits, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0], reduction, weight).unwrap()
        }));
    }
    let token_logits = param(r, &[5, 4]);
    for (name, reduction) in [("cross_entropy mean", Reduction::Mean), ("cross_entropy sum", Reduction::Sum)] {
        let token_logits = token_logits.clone();
        cases.push(case(name, tight, vec![token_logits.clone()], move || {
            cross_entropy(&token_logits, &[2, 0, 3, 0, 1], Some(0), reduction).unwrap()
        }));
    }

    cases.push(summarizer_case(seed));
    cases.push(matcher_case(seed));
    cases
}

pub fn tiny_summarizer(seed: u64) -> bcm::summarizer::SummarizerModel {
    use bcm::summarizer::{SummarizerConfig, SummarizerModel};
    use bcm::tensor::Activation;
    use bcm::text::Vocabulary;
    use std::sync::Arc;

    let vocab = Arc::new(Vocabulary::from_tokens(["a", "b", "c", "d", "e", "f"]));
    let config = SummarizerConfig {
        num_layers: 1,
        hidden_dim: 8,
        num_heads: 2,
        ffn_dim: 12,
        max_source_len: 10,
        max_decode_len: 5,
        vocab_size: vocab.len(),
        interlayer_activation: Activation::Gelu,
        share_embeddings: true,
    };
    SummarizerModel::new(config, vocab, seed).expect("valid config")
}

fn summarizer_case(seed: u64) -> GradCase {
    let model = tiny_summarizer(seed);
    let params = model.parameters();
    case("summarizer loss", 1e-3, params, move || {
        model.loss(&[4, 5, 6, 7, 9, 4], &[5, 8, 6]).unwrap()
    })
}

pub fn tiny_matcher(seed: u64) -> bcm::matcher::MatcherModel {
    use bcm::embeddings::EmbeddingTable;
    use bcm::matcher::{ConvSpec, MatcherConfig, MatcherModel, PoolSpec};
    use bcm::text::Vocabulary;
    use std::sync::Arc;

    let vocab = Arc::new(Vocabulary::from_tokens(["a", "b", "c", "d"]));
    let mut r = rng(seed);
    let table = EmbeddingTable::from_vectors(vocab.clone(), 3, uniform(&mut r, vocab.len() * 3, 1.0)).unwrap();
    let config = MatcherConfig {
        summary_max_tokens: 10,
        conv: vec![ConvSpec { kernel: 3, channels: 3 }, ConvSpec { kernel: 2, channels: 2 }],
        pool: vec![PoolSpec { height: 2, width: 2 }, PoolSpec { height: 1, width: 1 }],
        mlp_hidden: 4,
        ..MatcherConfig::default()
    };
    MatcherModel::new(config, table, seed).expect("valid config")
}

fn matcher_case(seed: u64) -> GradCase {
    use bcm::tensor::{bce_with_logits, Reduction};

    let model = tiny_matcher(seed);
    let params = model.parameters();
    let left = [4, 5, 6, 3, 7, 7, 0, 0, 0, 0];
    let right = [6, 7, 3, 4, 5, 0, 0, 0, 0, 0];
    let matrices = [
        model.similarity(&left, &right).unwrap(),
        model.similarity(&right, &left).unwrap(),
    ];
    case("matcher loss", 1e-4, params, move || {
        let a = model.forward(&matrices[0]).unwrap();
        let b = model.forward(&matrices[1]).unwrap();
        let la = bce_with_logits(&a, &[1.0], Reduction::Sum, 1.0).unwrap();
        let lb = bce_with_logits(&b, &[0.0], Reduction::Sum, 1.0).unwrap();
        la.add(&lb).unwrap()
    })
}

fn naive_conv(input: &[f64], (cin, h, w): (usize, usize, usize), kern: &[f64], (cout, kh, kw): (usize, usize, usize), bias: &[f64], relu: bool) -> Vec<f64> {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; cout * oh * ow];
    for o in 0..cout {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = bias[o];
                for c in 0..cin {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            acc += input[(c * h + y + dy) * w + x + dx] * kern[((o * cin + c) * kh + dy) * kw + dx];
                        }
                    }
                }
                out[(o * oh + y) * ow + x] = if relu { acc.max(0.0) } else { acc };
            }
        }
    }
    out
}

fn naive_pool(input: &[f64], (c, h, w): (usize, usize, usize), ph: usize, pw: usize) -> Vec<f64> {
    let (oh, ow) = (h / ph, w / pw);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..ph {
                    for dx in 0..pw {
                        best = best.max(input[(ch * h + y * ph + dy) * w + x * pw + dx]);
                    }
                }
                out.push(best);
            }
        }
    }
    out
}

fn naive_rouge(reference: &[String], candidate: &[String], n: usize) -> f64 {
    let grams = |t: &[String]| -> Vec<Vec<String>> {
        if t.len() < n {
            Vec::new()
        } else {
            (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
        }
    };
    let (rg, cg) = (grams(reference), grams(candidate));
    if rg.is_empty() {
        return 0.0;
    }
    let mut seen: Vec<&Vec<String>> = Vec::new();
    let mut hits = 0usize;
    for g in &rg {
        if seen.contains(&g) {
            continue;
        }
        seen.push(g);
        let in_ref = rg.iter().filter(|x| *x == g).count();
        let in_cand = cg.iter().filter(|x| *x == g).count();
        hits += in_ref.min(in_cand);
    }
    hits as f64 / rg.len() as f64
}

/// Checks conv2d, maxpool2d, similarity_matrix and rouge_n against the naive
/// loops above on `instances` random inputs each.
pub fn oracle_sweep(instances: usize, seed: u64) -> Result<(), String> {
    use bcm::embeddings::EmbeddingTable;
    use bcm::matcher::similarity_matrix;
    use bcm::metrics::rouge_n;
    use bcm::tensor::{conv2d, maxpool2d, Activation};
    use bcm::text::Vocabulary;
    use std::sync::Arc;

    let r = &mut rng(seed);
    for i in 0..instances {
        let (cin, h, w) = (r.gen_range(1..=3), r.gen_range(2..=9), r.gen_range(2..=9));
        let (cout, kh, kw) = (r.gen_range(1..=3), r.gen_range(1..=h), r.gen_range(1..=w));
        let x = uniform(r, cin * h * w, 2.0);
        let k = uniform(r, cout * cin * kh * kw, 1.0);
        let b = uniform(r, cout, 0.5);
        let relu = r.gen_bool(0.5);
        let got = conv2d(
            &Tensor::new(&[cin, h, w], x.clone()).unwrap(),
            &Tensor::new(&[cout, cin, kh, kw], k.clone()).unwrap(),
            &Tensor::new(&[cout], b.clone()).unwrap(),
            if relu { Activation::Relu } else { Activation::Identity },
        )
        .map_err(|e| e.to_string())?;
        let want = naive_conv(&x, (cin, h, w), &k, (cout, kh, kw), &b, relu);
        if got.shape() != [cout, h - kh + 1, w - kw + 1] {
            return Err(format!("conv instance {i}: shape {:?}", got.shape()));
        }
        if let Some((g, e)) = got.to_vec().iter().zip(&want).find(|(g, e)| (*g - *e).abs() > 1e-9) {
            return Err(format!("conv instance {i}: {g} vs {e}"));
        }

        // Small integer values make ties common.
        let (c, h, w) = (r.gen_range(1..=3), r.gen_range(1..=9), r.gen_range(1..=9));
        let (ph, pw) = (r.gen_range(1..=h.min(3)), r.gen_range(1..=w.min(3)));
        let x: Vec<f64> = (0..c * h * w).map(|_| r.gen_range(-3..=3) as f64).collect();
        let got = maxpool2d(&Tensor::new(&[c, h, w], x.clone()).unwrap(), ph, pw).map_err(|e| e.to_string())?;
        if got.shape() != [c, h / ph, w / pw] || got.to_vec() != naive_pool(&x, (c, h, w), ph, pw) {
            return Err(format!("maxpool instance {i} differs"));
        }

        let words: Vec<String> = (0..r.gen_range(1..=8)).map(|j| format!("w{j}")).collect();
        let vocab = Arc::new(Vocabulary::from_tokens(words));
        let d = r.gen_range(1..=5);
        let table = EmbeddingTable::from_vectors(vocab.clone(), d, uniform(r, vocab.len() * d, 1.0)).unwrap();
        let len = r.gen_range(1..=8);
        let left: Vec<usize> = (0..len).map(|_| r.gen_range(0..vocab.len())).collect();
        let right: Vec<usize> = (0..len).map(|_| r.gen_range(0..vocab.len())).collect();
        let got = similarity_matrix(&table, &left, &right).map_err(|e| e.to_string())?;
        let mut want = Vec::with_capacity(len * len);
        for &a in &left {
            for &b in &right {
                let (ra, rb) = (table.row(a), table.row(b));
                want.push((0..d).fold(0.0, |acc, t| acc + ra[t] * rb[t]));
            }
        }
        if got.shape() != [len, len] || got.to_vec() != want {
            return Err(format!("similarity instance {i} differs"));
        }

        let alphabet = ["a", "b", "c", "d"];
        let mut draw = |max: usize| -> Vec<String> {
            (0..r.gen_range(0..=max)).map(|_| alphabet[r.gen_range(0..4)].to_string()).collect()
        };
        let (reference, candidate) = (draw(10), draw(10));
        let n = r.gen_range(1..=3);
        let (got, want) = (rouge_n(&reference, &candidate, n), naive_rouge(&reference, &candidate, n));
        if got != want {
            return Err(format!("rouge instance {i}: {got} vs {want} for {reference:?} / {candidate:?} n={n}"));
        }
    }
    Ok(())
}

/// Writes a small planted-topic dataset into `dir/data` and returns a
/// pipeline config with short schedules that finishes in seconds.
pub fn quick_pipeline(dir: &std::path::Path, seed: u64) -> bcm::experiments::PipelineConfig {
    use bcm::experiments::{generate_synthetic_dataset, PipelineConfig, SyntheticConfig};

    let synthetic = SyntheticConfig {
        num_celebrities: 10,
        num_brands: 8,
        positive_rate: 0.25,
        ..SyntheticConfig::default()
    };
    let data = generate_synthetic_dataset(&synthetic, seed).unwrap();
    let (corpus_path, pairs_path) = data.write(&dir.join("data")).unwrap();
    let mut config = PipelineConfig {
        corpus_path,
        pairs_path,
        output_dir: dir.join("run"),
        seed,
        ..PipelineConfig::default()
    };
    config.embeddings.epochs = 5;
    config.summarizer.epochs = 1;
    config.matcher.epochs = 2;
    config
}
