use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean softmax cross-entropy and its gradient `(softmax − onehot)/B`.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    softmax_xent_weighted(logits, labels, None)
}

/// Cross-entropy where sample `b` contributes `weights[b] · CE_b / B`.
pub fn softmax_xent_weighted(
    logits: &Tensor,
    labels: &[usize],
    weights: Option<&[f64]>,
) -> Result<(f64, Tensor)> {
    let (b, c) = (logits.rows(), logits.cols());
    if labels.len() != b {
        return Err(Error::dim("softmax_xent", format!("{} labels for {b} rows", labels.len())));
    }
    if let Some(w) = weights {
        if w.len() != b {
            return Err(Error::dim("softmax_xent", format!("{} weights for {b} rows", w.len())));
        }
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::Data(format!("label {bad} out of range for {c} classes")));
    }
    let mut grad = logits.clone();
    let mut loss = 0.0;
    let inv_b = 1.0 / b as f64;
    for (r, &y) in labels.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[r]);
        let row = grad.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        // -log p_y = log Σ exp(z - max) - (z_y - max)
        loss += w * (sum.ln() - (logits.get(r, y) - max));
        for v in row.iter_mut() {
            *v /= sum;
        }
        row[y] -= 1.0;
        for v in row.iter_mut() {
            *v *= w * inv_b;
        }
    }
    Ok((loss * inv_b, grad))
}
