//! Softmax cross-entropy head.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Numerically stable softmax (max-subtraction). Output sums to 1.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Returns (loss, grad_logits) where loss = -log softmax(logits)[label]
/// and grad = softmax(logits) - onehot(label).
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    label: usize,
) -> Result<(T, Tensor<T>)> {
    let k = logits.len();
    if label >= k {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    let probs = softmax(logits.data());
    let loss = -probs[label].max(T::min_positive_value()).ln();
    let mut grad = probs;
    grad[label] = grad[label] - T::one();
    Ok((loss, Tensor::from_vec(grad)))
}
