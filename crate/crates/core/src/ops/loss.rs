use crate::tensor::{Scalar, Tensor, TensorError};

/// Mean softmax cross-entropy over a batch of logits `[B, C]`.
///
/// Returns the loss and its gradient `(softmax - onehot) / B`. Uses the
/// log-sum-exp form, so large logits do not overflow.
pub fn cross_entropy_logits<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>), TensorError> {
    const OP: &str = "cross_entropy_logits";
    let (b, c) = logits.dims2(OP)?;
    if labels.len() != b {
        return Err(TensorError::shape(OP, b, labels.len()));
    }
    if b == 0 {
        return Err(TensorError::invalid(OP, "empty batch"));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= c) {
        return Err(TensorError::invalid(OP, format!("label {bad} outside 0..{c}")));
    }
    let inv_b = T::one() / T::from_f64_lossy(b as f64);
    let mut grad = Tensor::zeros(&[b, c]);
    let mut total = T::zero();
    for ((row, g), &label) in logits
        .data()
        .chunks_exact(c)
        .zip(grad.data_mut().chunks_exact_mut(c))
        .zip(labels)
    {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        let lse = max + log_sum;
        total += log_sum + (max - row[label]);
        for (k, (gk, &v)) in g.iter_mut().zip(row).enumerate() {
            let p = (v - lse).exp();
            let onehot = if k == label { T::one() } else { T::zero() };
            *gk = (p - onehot) * inv_b;
        }
    }
    Ok((total * inv_b, grad))
}
