use crate::error::{Error, Result};

use super::ops::{log_sum_exp, softmax_row};
use super::tensor::{Real, Tensor};

/// Cross-entropy of `softmax(logits)` against `label`, with its gradient
/// `softmax(logits) - onehot(label)`.
pub fn softmax_xent<T: Real>(logits: &Tensor<T>, label: usize) -> Result<(T, Tensor<T>)> {
    let (loss, grad) = softmax_xent_slice(logits.data(), label)?;
    Ok((loss, Tensor::new(logits.dims().to_vec(), grad)?))
}

pub fn softmax_xent_slice<T: Real>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::OutOfRange {
            index: label,
            size: logits.len(),
        });
    }
    let loss = (log_sum_exp(logits) - logits[label]).max(T::zero());
    let mut grad = softmax_row(logits);
    grad[label] -= T::one();
    Ok((loss, grad))
}
