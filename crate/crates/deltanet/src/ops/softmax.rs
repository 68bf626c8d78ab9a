//! Softmax with mean cross-entropy loss, fused with its gradient.

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// Numerically stable softmax + mean cross-entropy over a batch of logits.
/// Returns `(loss, probabilities, d_loss/d_logits)` where the gradient is
/// `(probs - onehot) / N`.
pub fn softmax_xent<E: Elem>(
    logits: &Tensor<E>,
    labels: &[usize],
) -> Result<(E, Tensor<E>, Tensor<E>)> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {n} rows of logits",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let mut probs = Tensor::zeros(&[n, k])?;
    let mut grad = Tensor::zeros(&[n, k])?;
    let inv_n = E::from_f64(1.0 / n as f64);
    let mut loss = E::zero();
    for (row, (p_row, g_row)) in probs
        .data_mut()
        .chunks_mut(k)
        .zip(grad.data_mut().chunks_mut(k))
        .enumerate()
    {
        let x = &logits.data()[row * k..(row + 1) * k];
        let mut max = x[0];
        for &v in x {
            if v > max {
                max = v;
            }
        }
        let mut sum = E::zero();
        for (p, &v) in p_row.iter_mut().zip(x) {
            *p = (v - max).exp();
            sum = sum + *p;
        }
        let inv_sum = E::one() / sum;
        for p in p_row.iter_mut() {
            *p = *p * inv_sum;
        }
        let label = labels[row];
        loss = loss - p_row[label].ln();
        for (g, &p) in g_row.iter_mut().zip(p_row.iter()) {
            *g = p * inv_n;
        }
        g_row[label] = g_row[label] - inv_n;
    }
    Ok((loss * inv_n, probs, grad))
}
