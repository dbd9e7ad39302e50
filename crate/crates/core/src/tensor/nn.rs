//! Neural-network primitives: softmax, attention, layer norm, convolution,
//! pooling and embedding lookup.

use super::{Result, Tensor, TensorError};

/// Variance epsilon used by every layer norm in the crate.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Gelu,
}

impl Activation {
    pub fn apply(self, x: &Tensor) -> Tensor {
        match self {
            Activation::Identity => x.clone(),
            Activation::Relu => x.relu(),
            Activation::Gelu => x.gelu(),
        }
    }
}

/// Softmax along `axis`, max-subtracted.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let shape = x.shape().to_vec();
    if axis >= shape.len() {
        return Err(TensorError::InvalidAxis {
            op: "softmax",
            axis,
            shape,
        });
    }
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        for j in 0..inner {
            let idx = |i: usize| (o * len + i) * inner + j;
            let max = (0..len).map(|i| src[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for i in 0..len {
                let e = (src[idx(i)] - max).exp();
                out[idx(i)] = e;
                total += e;
            }
            for i in 0..len {
                out[idx(i)] /= total;
            }
        }
    }
    drop(src);
    Ok(Tensor::from_op("softmax", shape, out, vec![x.clone()], move |g, y| {
        let mut gx = vec![0.0; y.len()];
        for o in 0..outer {
            for j in 0..inner {
                let idx = |i: usize| (o * len + i) * inner + j;
                let dot: f64 = (0..len).map(|i| g[idx(i)] * y[idx(i)]).sum();
                for i in 0..len {
                    gx[idx(i)] = y[idx(i)] * (g[idx(i)] - dot);
                }
            }
        }
        vec![Some(gx)]
    }))
}

/// Boolean query×key matrix; `true` means the key position may be attended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let allowed = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| f(i, j)).collect();
        Self { rows, cols, allowed }
    }

    /// Position `i` may attend to positions `0..=i`.
    pub fn causal(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| j <= i)
    }

    /// Every query may attend exactly the keys flagged valid.
    pub fn key_padding(rows: usize, key_valid: &[bool]) -> Self {
        Self::from_fn(rows, key_valid.len(), |_, j| key_valid[j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_allowed(&self, row: usize, col: usize) -> bool {
        self.allowed[row * self.cols + col]
    }

    /// Intersection of two masks of equal size.
    pub fn and(&self, other: &AttentionMask) -> AttentionMask {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let allowed = self.allowed.iter().zip(&other.allowed).map(|(a, b)| *a && *b).collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            allowed,
        }
    }
}

/// Row-wise softmax over a rank-2 tensor with masked entries forced to zero.
fn masked_row_softmax(x: &Tensor, mask: &AttentionMask) -> Result<Tensor> {
    let (r, c) = (x.shape()[0], x.shape()[1]);
    let src = x.data();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &src[i * c..(i + 1) * c];
        let max = (0..c)
            .filter(|&j| mask.is_allowed(i, j))
            .map(|j| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(TensorError::FullyMaskedRow { row: i });
        }
        let orow = &mut out[i * c..(i + 1) * c];
        let mut total = 0.0;
        for j in 0..c {
            if mask.is_allowed(i, j) {
                let e = (row[j] - max).exp();
                orow[j] = e;
                total += e;
            }
        }
        orow.iter_mut().for_each(|v| *v /= total);
    }
    drop(src);
    Ok(Tensor::from_op("masked_softmax", vec![r, c], out, vec![x.clone()], move |g, y| {
        let mut gx = vec![0.0; r * c];
        for i in 0..r {
            let (gr, yr) = (&g[i * c..(i + 1) * c], &y[i * c..(i + 1) * c]);
            let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
            for j in 0..c {
                gx[i * c + j] = yr[j] * (gr[j] - dot);
            }
        }
        vec![Some(gx)]
    }))
}

pub struct AttentionOutput {
    pub output: Tensor,
    /// Attention weights, `queries × keys`.
    pub weights: Tensor,
}

/// `softmax(q·kᵀ/√d_k)·v` with optional masking.
pub fn attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    mask: Option<&AttentionMask>,
) -> Result<AttentionOutput> {
    let rank2 = |t: &Tensor| -> Result<(usize, usize)> {
        match t.shape() {
            &[a, b] => Ok((a, b)),
            s => Err(TensorError::Rank {
                op: "attention",
                expected: 2,
                shape: s.to_vec(),
            }),
        }
    };
    let (nq, dq) = rank2(q)?;
    let (nk, dk) = rank2(k)?;
    let (nv, _) = rank2(v)?;
    if dq != dk {
        return Err(TensorError::ShapeMismatch {
            op: "attention (q/k feature dim)",
            left: q.shape().to_vec(),
            right: k.shape().to_vec(),
        });
    }
    if nk != nv {
        return Err(TensorError::ShapeMismatch {
            op: "attention (k/v length)",
            left: k.shape().to_vec(),
            right: v.shape().to_vec(),
        });
    }
    let scores = q.matmul(&k.transpose()?)?.scale(1.0 / (dk as f64).sqrt());
    let weights = match mask {
        Some(m) => {
            if (m.rows(), m.cols()) != (nq, nk) {
                return Err(TensorError::ShapeMismatch {
                    op: "attention (mask)",
                    left: vec![nq, nk],
                    right: vec![m.rows(), m.cols()],
                });
            }
            masked_row_softmax(&scores, m)?
        }
        None => softmax(&scores, 1)?,
    };
    let output = weights.matmul(v)?;
    Ok(AttentionOutput { output, weights })
}

/// Normalizes each row over the last axis, then applies `gain`/`bias`.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    let n = *x.shape().last().expect("non-empty shape");
    for p in [gain, bias] {
        if p.numel() != n {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                left: x.shape().to_vec(),
                right: p.shape().to_vec(),
            });
        }
    }
    let rows = x.numel() / n;
    let src = x.data();
    let (gd, bd) = (gain.data(), bias.data());
    let mut xhat = vec![0.0; src.len()];
    let mut rstd = vec![0.0; rows];
    let mut out = vec![0.0; src.len()];
    for r in 0..rows {
        let row = &src[r * n..(r + 1) * n];
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let s = 1.0 / (var + eps).sqrt();
        rstd[r] = s;
        for j in 0..n {
            let h = (row[j] - mean) * s;
            xhat[r * n + j] = h;
            out[r * n + j] = h * gd[j] + bd[j];
        }
    }
    drop((src, gd, bd));
    let gain_c = gain.clone();
    Ok(Tensor::from_op(
        "layer_norm",
        x.shape().to_vec(),
        out,
        vec![x.clone(), gain.clone(), bias.clone()],
        move |g, _| {
            let gd = gain_c.data();
            let mut gx = vec![0.0; g.len()];
            let mut ggain = vec![0.0; n];
            let mut gbias = vec![0.0; n];
            for r in 0..rows {
                let gr = &g[r * n..(r + 1) * n];
                let hr = &xhat[r * n..(r + 1) * n];
                let mut mean_d = 0.0;
                let mut mean_dh = 0.0;
                for j in 0..n {
                    ggain[j] += gr[j] * hr[j];
                    gbias[j] += gr[j];
                    let d = gr[j] * gd[j];
                    mean_d += d;
                    mean_dh += d * hr[j];
                }
                mean_d /= n as f64;
                mean_dh /= n as f64;
                for j in 0..n {
                    let d = gr[j] * gd[j];
                    gx[r * n + j] = rstd[r] * (d - mean_d - hr[j] * mean_dh);
                }
            }
            vec![Some(gx), Some(ggain), Some(gbias)]
        },
    ))
}

/// Valid (unpadded) stride-1 convolution.
///
/// `input` is `C_in×H×W`, `kernels` is `C_out×C_in×kh×kw`, `bias` is `C_out`.
/// Output is `C_out×(H−kh+1)×(W−kw+1)` passed through `activation`.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor, activation: Activation) -> Result<Tensor> {
    let &[cin, h, w] = input.shape() else {
        return Err(TensorError::Rank {
            op: "conv2d input",
            expected: 3,
            shape: input.shape().to_vec(),
        });
    };
    let &[cout, kcin, kh, kw] = kernels.shape() else {
        return Err(TensorError::Rank {
            op: "conv2d kernels",
            expected: 4,
            shape: kernels.shape().to_vec(),
        });
    };
    if kcin != cin {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d (input channels)",
            left: input.shape().to_vec(),
            right: kernels.shape().to_vec(),
        });
    }
    if bias.numel() != cout {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d (bias)",
            left: kernels.shape().to_vec(),
            right: bias.shape().to_vec(),
        });
    }
    if kh > h || kw > w {
        return Err(TensorError::KernelTooLarge {
            kernel: kernels.shape().to_vec(),
            input: input.shape().to_vec(),
        });
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let x = input.data();
    let k = kernels.data();
    let b = bias.data();
    let mut out = vec![0.0; cout * oh * ow];
    for co in 0..cout {
        let plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = b[co]);
        for ci in 0..cin {
            let xin = &x[ci * h * w..(ci + 1) * h * w];
            for s in 0..kh {
                for t in 0..kw {
                    let wv = k[((co * cin + ci) * kh + s) * kw + t];
                    if wv == 0.0 {
                        continue;
                    }
                    for i in 0..oh {
                        let src = &xin[(i + s) * w + t..(i + s) * w + t + ow];
                        let dst = &mut plane[i * ow..(i + 1) * ow];
                        for (d, &sv) in dst.iter_mut().zip(src) {
                            *d += wv * sv;
                        }
                    }
                }
            }
        }
    }
    drop((x, k, b));
    let (inp, ker) = (input.clone(), kernels.clone());
    let linear = Tensor::from_op(
        "conv2d",
        vec![cout, oh, ow],
        out,
        vec![input.clone(), kernels.clone(), bias.clone()],
        move |g, _| {
            let x = inp.data();
            let k = ker.data();
            let mut gk = vec![0.0; k.len()];
            let mut gb = vec![0.0; cout];
            let mut gx = inp.requires_grad().then(|| vec![0.0; x.len()]);
            for co in 0..cout {
                let gplane = &g[co * oh * ow..(co + 1) * oh * ow];
                gb[co] = gplane.iter().sum();
                for ci in 0..cin {
                    let xin = &x[ci * h * w..(ci + 1) * h * w];
                    for s in 0..kh {
                        for t in 0..kw {
                            let kidx = ((co * cin + ci) * kh + s) * kw + t;
                            let mut acc = 0.0;
                            for i in 0..oh {
                                let src = &xin[(i + s) * w + t..(i + s) * w + t + ow];
                                let gr = &gplane[i * ow..(i + 1) * ow];
                                acc += src.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
                            }
                            gk[kidx] = acc;
                            if let Some(gx) = gx.as_mut() {
                                let wv = k[kidx];
                                let gxin = &mut gx[ci * h * w..(ci + 1) * h * w];
                                for i in 0..oh {
                                    let dst = &mut gxin[(i + s) * w + t..(i + s) * w + t + ow];
                                    let gr = &gplane[i * ow..(i + 1) * ow];
                                    for (d, &gv) in dst.iter_mut().zip(gr) {
                                        *d += wv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            vec![gx, Some(gk), Some(gb)]
        },
    );
    Ok(activation.apply(&linear))
}

/// Non-overlapping max pooling over `C×H×W`; trailing rows/columns that do
/// not fill a window are dropped. Ties resolve to the first maximum.
pub fn maxpool2d(input: &Tensor, pool_h: usize, pool_w: usize) -> Result<Tensor> {
    let &[c, h, w] = input.shape() else {
        return Err(TensorError::Rank {
            op: "maxpool2d",
            expected: 3,
            shape: input.shape().to_vec(),
        });
    };
    if pool_h == 0 || pool_w == 0 || h / pool_h == 0 || w / pool_w == 0 {
        return Err(TensorError::InvalidPool {
            pool: (pool_h, pool_w),
            input: input.shape().to_vec(),
        });
    }
    let (oh, ow) = (h / pool_h, w / pool_w);
    let x = input.data();
    let mut out = vec![0.0; c * oh * ow];
    let mut argmax = vec![0usize; c * oh * ow];
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for s in 0..pool_h {
                    for t in 0..pool_w {
                        let idx = (ch * h + i * pool_h + s) * w + j * pool_w + t;
                        if best_idx == usize::MAX || x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (ch * oh + i) * ow + j;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    let n_in = x.len();
    drop(x);
    Ok(Tensor::from_op("maxpool2d", vec![c, oh, ow], out, vec![input.clone()], move |g, _| {
        let mut gx = vec![0.0; n_in];
        for (o, &src) in argmax.iter().enumerate() {
            gx[src] += g[o];
        }
        vec![Some(gx)]
    }))
}

/// Gathers rows of a `V×d` table.
pub fn embedding(table: &Tensor, ids: &[usize]) -> Result<Tensor> {
    let &[vocab, dim] = table.shape() else {
        return Err(TensorError::Rank {
            op: "embedding",
            expected: 2,
            shape: table.shape().to_vec(),
        });
    };
    if ids.is_empty() {
        return Err(TensorError::Invalid("embedding: empty id list".into()));
    }
    if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
        return Err(TensorError::IndexOutOfRange { index: bad, len: vocab });
    }
    let src = table.data();
    let data = ids.iter().flat_map(|&i| src[i * dim..(i + 1) * dim].iter().copied()).collect();
    drop(src);
    let ids = ids.to_vec();
    Ok(Tensor::from_op("embedding", vec![ids.len(), dim], data, vec![table.clone()], move |g, _| {
        let mut gt = vec![0.0; vocab * dim];
        for (r, &i) in ids.iter().enumerate() {
            gt[i * dim..(i + 1) * dim]
                .iter_mut()
                .zip(&g[r * dim..(r + 1) * dim])
                .for_each(|(a, b)| *a += b);
        }
        vec![Some(gt)]
    }))
}
