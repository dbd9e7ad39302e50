//! Binary and categorical cross-entropy.

use serde::{Deserialize, Serialize};

use super::ops::sigmoid_scalar;
use super::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary cross-entropy computed from pre-sigmoid logits.
///
/// Per element: `−[w·y·ln σ(o) + (1−y)·ln(1−σ(o))]` where `w` is the
/// positive-class weight. `Reduction::Sum` is the plain batch sum.
pub fn bce_with_logits(
    logits: &Tensor,
    labels: &[f64],
    reduction: Reduction,
    positive_weight: f64,
) -> Result<Tensor> {
    if labels.len() != logits.numel() {
        return Err(TensorError::ShapeMismatch {
            op: "bce_with_logits",
            left: logits.shape().to_vec(),
            right: vec![labels.len()],
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(TensorError::InvalidLabel(bad));
    }
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / labels.len() as f64,
    };
    let o = logits.data();
    let total: f64 = o
        .iter()
        .zip(labels)
        .map(|(&o, &y)| positive_weight * y * softplus(-o) + (1.0 - y) * softplus(o))
        .sum();
    drop(o);
    let labels = labels.to_vec();
    let lc = logits.clone();
    Ok(Tensor::from_op("bce_with_logits", vec![1], vec![total * scale], vec![logits.clone()], move |g, _| {
        let o = lc.data();
        let gx = o
            .iter()
            .zip(&labels)
            .map(|(&o, &y)| {
                let p = sigmoid_scalar(o);
                g[0] * scale * (positive_weight * y * (p - 1.0) + (1.0 - y) * p)
            })
            .collect();
        vec![Some(gx)]
    }))
}

/// Token-level cross-entropy over `T×V` logits.
///
/// Positions whose target equals `ignore` are excluded from both the sum and
/// the mean denominator.
pub fn cross_entropy(
    logits: &Tensor,
    targets: &[usize],
    ignore: Option<usize>,
    reduction: Reduction,
) -> Result<Tensor> {
    let &[t, v] = logits.shape() else {
        return Err(TensorError::Rank {
            op: "cross_entropy",
            expected: 2,
            shape: logits.shape().to_vec(),
        });
    };
    if targets.len() != t {
        return Err(TensorError::ShapeMismatch {
            op: "cross_entropy",
            left: logits.shape().to_vec(),
            right: vec![targets.len()],
        });
    }
    if let Some(&bad) = targets.iter().find(|&&id| id >= v && Some(id) != ignore) {
        return Err(TensorError::TargetOutOfRange { id: bad, vocab: v });
    }
    let active: Vec<bool> = targets.iter().map(|&id| Some(id) != ignore).collect();
    let count = active.iter().filter(|&&a| a).count();
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean if count > 0 => 1.0 / count as f64,
        Reduction::Mean => 0.0,
    };
    let x = logits.data();
    let mut probs = vec![0.0; t * v];
    let mut total = 0.0;
    for i in 0..t {
        let row = &x[i * v..(i + 1) * v];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
        for j in 0..v {
            probs[i * v + j] = (row[j] - lse).exp();
        }
        if active[i] {
            total += lse - row[targets[i]];
        }
    }
    drop(x);
    let targets = targets.to_vec();
    Ok(Tensor::from_op("cross_entropy", vec![1], vec![total * scale], vec![logits.clone()], move |g, _| {
        let mut gx = vec![0.0; t * v];
        for i in 0..t {
            if !active[i] {
                continue;
            }
            for j in 0..v {
                gx[i * v + j] = g[0] * scale * probs[i * v + j];
            }
            gx[i * v + targets[i]] -= g[0] * scale;
        }
        vec![Some(gx)]
    }))
}
