//! Forward kernels shared by the differentiation graph and plain inference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reduction applied across time after rectification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Max,
    Avg,
}

/// `y = W x + b`.
pub fn affine(w: &Tensor, x: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, n) = w
        .matrix_dims()
        .ok_or_else(|| Error::dim("affine", w.shape(), x.shape()))?;
    if x.shape() != [n] {
        return Err(Error::dim("affine", w.shape(), x.shape()));
    }
    if b.shape() != [m] {
        return Err(Error::dim("affine", w.shape(), b.shape()));
    }
    let xs = x.data();
    let out = (0..m)
        .map(|r| {
            let dot: f64 = w.row(r).iter().zip(xs).map(|(a, b)| a * b).sum();
            dot + b.data()[r]
        })
        .collect();
    Tensor::new(vec![m], out)
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Kernel geometry of a same-padded correlation: `(rows, taps)`.
fn conv_geometry(x: &Tensor, h: &Tensor) -> Result<(usize, usize)> {
    if x.rank() != 1 {
        return Err(Error::dim("conv1d_same", x.shape(), h.shape()));
    }
    let (rows, taps) = match h.shape() {
        &[l] => (1, l),
        &[m, l] => (m, l),
        _ => return Err(Error::dim("conv1d_same", x.shape(), h.shape())),
    };
    if taps % 2 == 0 {
        return Err(Error::Config(format!(
            "conv1d_same kernel length must be odd, got {taps}"
        )));
    }
    if taps > x.len() {
        return Err(Error::Size(format!(
            "kernel length {taps} exceeds signal length {}",
            x.len()
        )));
    }
    Ok((rows, taps))
}

/// Zero-pads `x` by `(taps - 1) / 2` on both ends.
pub(crate) fn pad_same(x: &[f64], taps: usize) -> Vec<f64> {
    let half = (taps - 1) / 2;
    let mut padded = vec![0.0; x.len() + taps - 1];
    padded[half..half + x.len()].copy_from_slice(x);
    padded
}

/// Same-length cross-correlation with zero padding:
/// `y[n] = Σ_k h[k] · x[n + k - (L-1)/2]`.
///
/// `h` is either one kernel `[L]` (output `[N]`) or a bank `[M×L]`
/// (output `[M×N]`). The kernel is not flipped.
pub fn conv1d_same(x: &Tensor, h: &Tensor) -> Result<Tensor> {
    let (rows, taps) = conv_geometry(x, h)?;
    let n = x.len();
    let padded = pad_same(x.data(), taps);
    let mut out = vec![0.0; rows * n];
    for (r, y) in out.chunks_exact_mut(n).enumerate() {
        let kernel = &h.data()[r * taps..(r + 1) * taps];
        // Accumulating tap by tap keeps each y[n] summed in k order.
        for (k, &coef) in kernel.iter().enumerate() {
            let src = &padded[k..k + n];
            for (acc, &s) in y.iter_mut().zip(src) {
                *acc += coef * s;
            }
        }
    }
    let shape = if h.rank() == 1 { vec![n] } else { vec![rows, n] };
    Tensor::new(shape, out)
}

/// Per-row reduction of `|y|`. Returns the pooled values and, for max
/// pooling, the first index attaining the maximum in each row.
pub fn pool_over_time(y: &Tensor, mode: PoolMode) -> Result<(Tensor, Vec<usize>)> {
    let (rows, cols) = match y.shape() {
        &[n] => (1, n),
        &[m, n] => (m, n),
        other => return Err(Error::Size(format!("pool expects rank 1 or 2, got {other:?}"))),
    };
    let mut out = Vec::with_capacity(rows);
    let mut argmax = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &y.data()[r * cols..(r + 1) * cols];
        match mode {
            PoolMode::Max => {
                let mut best = 0;
                let mut best_val = row[0].abs();
                for (i, v) in row.iter().enumerate().skip(1) {
                    if v.abs() > best_val {
                        best = i;
                        best_val = v.abs();
                    }
                }
                out.push(best_val);
                argmax.push(best);
            }
            PoolMode::Avg => {
                out.push(row.iter().map(|v| v.abs()).sum::<f64>() / cols as f64);
            }
        }
    }
    Ok((Tensor::new(vec![rows], out)?, argmax))
}

/// Elementwise `ln(v + eps)`.
pub fn log_compress(v: &Tensor, eps: f64) -> Result<Tensor> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("log eps must be positive, got {eps}")));
    }
    let mut data = Vec::with_capacity(v.len());
    for &x in v.data() {
        let arg = x + eps;
        if !(arg > 0.0) {
            return Err(Error::Range {
                value: x,
                min: -eps,
                max: f64::INFINITY,
            });
        }
        data.push(arg.ln());
    }
    Tensor::new(v.shape().to_vec(), data)
}

/// Softmax with max subtraction.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `ln Σ exp(x_i)`.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `-log softmax(logits)[target]`.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::Index {
            index: target,
            len: logits.len(),
        });
    }
    Ok(log_sum_exp(logits) - logits[target])
}

/// Mean Huber loss over elements of `target - pred`.
pub fn huber(pred: &[f64], target: &[f64], delta: f64) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::dim("huber", &[pred.len()], &[target.len()]));
    }
    if !(delta > 0.0) {
        return Err(Error::Config(format!("huber delta must be positive, got {delta}")));
    }
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let r = (t - p).abs();
            if r <= delta {
                0.5 * r * r
            } else {
                delta * (r - 0.5 * delta)
            }
        })
        .sum();
    Ok(total / pred.len() as f64)
}
