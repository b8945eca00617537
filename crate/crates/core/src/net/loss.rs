//! Softmax, label-smoothed cross-entropy and probability-space MSE.

use alloc::format;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::math;
use crate::{Error, Result};

/// Tolerance on row sums of probability inputs.
pub const PROB_ROW_TOLERANCE: f64 = 1e-8;

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = math::exp(*v - max);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let top = argmax(row);
        let max = row[top];
        // the maximal term contributes exactly 1; log1p keeps the rest precise
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != top)
            .map(|(_, v)| math::exp(v - max))
            .sum();
        let log_sum = math::ln_1p(rest);
        for v in row.iter_mut() {
            *v = (*v - max) - log_sum;
        }
    }
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

/// Pulls `d/dprobs` back through a row-wise softmax with outputs `probs`.
pub fn softmax_backward(probs: &Matrix, d_probs: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(probs.rows(), probs.cols());
    for i in 0..probs.rows() {
        let (p, g) = (probs.row(i), d_probs.row(i));
        let inner: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for ((o, pj), gj) in out.row_mut(i).iter_mut().zip(p).zip(g) {
            *o = pj * (gj - inner);
        }
    }
    out
}

/// `(1 - eps) * onehot(label) + eps / C`.
pub fn smoothed_targets(labels: &[usize], classes: usize, eps: f64) -> Result<Matrix> {
    let mut t = Matrix::filled(labels.len(), classes, eps / classes as f64);
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        t[(i, label)] += 1.0 - eps;
    }
    Ok(t)
}

/// Mean cross-entropy against label-smoothed targets and its gradient
/// `(softmax - target) / n` with respect to the logits.
pub fn ce_label_smoothing(logits: &Matrix, labels: &[usize], eps: f64) -> Result<(f64, Matrix)> {
    let (n, c) = logits.shape();
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} logit rows for {} labels", labels.len())));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!(
            "label smoothing must be in [0, 1), got {eps}"
        )));
    }
    let target = smoothed_targets(labels, c, eps)?;
    let logp = log_softmax(logits);
    let nf = n as f64;
    let loss = -logp
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(lp, t)| t * lp)
        .sum::<f64>()
        / nf;
    let probs = softmax(logits);
    let grad = Matrix::from_fn(n, c, |i, j| (probs[(i, j)] - target[(i, j)]) / nf);
    Ok((loss, grad))
}

fn check_prob_rows(m: &Matrix, what: &str) -> Result<()> {
    for i in 0..m.rows() {
        let s: f64 = m.row(i).iter().sum();
        if !((s - 1.0).abs() <= PROB_ROW_TOLERANCE) {
            return Err(Error::InvalidParameter(format!(
                "{what} row {i} sums to {s}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Mean over batch and classes of `(ys - yt)^2`, with the gradient taken
/// with respect to `ys` only.
pub fn mse_consistency(ys: &Matrix, yt: &Matrix) -> Result<(f64, Matrix)> {
    if ys.shape() != yt.shape() {
        return Err(Error::Shape(format!(
            "consistency between {}x{} and {}x{}",
            ys.rows(),
            ys.cols(),
            yt.rows(),
            yt.cols()
        )));
    }
    check_prob_rows(ys, "student probability")?;
    check_prob_rows(yt, "teacher probability")?;
    let count = ys.as_slice().len() as f64;
    let diff: Vec<f64> = ys
        .as_slice()
        .iter()
        .zip(yt.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
    let grad = Matrix::from_vec(ys.rows(), ys.cols(), diff.iter().map(|d| 2.0 * d / count).collect())?;
    Ok((loss, grad))
}
