//! Rectified linear activation and numerically stable softmax.

use crate::tensor::{Elem, Tensor};

pub fn relu<E: Elem>(input: &Tensor<E>) -> Tensor<E> {
    input.map(|v| v.maximum(E::ZERO))
}

/// Gradient of [`relu`]: passes `grad_out` where the pre-activation was
/// strictly positive. The subgradient at exactly zero is taken as zero.
pub fn relu_backward<E: Elem>(pre_activation: &Tensor<E>, grad_out: &Tensor<E>) -> Tensor<E> {
    assert_eq!(
        pre_activation.shape, grad_out.shape,
        "relu_backward shape mismatch"
    );
    let mut grad = Tensor::zeros(&grad_out.shape);
    for i in 0..grad.data.len() {
        if pre_activation.data[i] > E::ZERO {
            grad.data[i] = grad_out.data[i];
        }
    }
    grad
}

/// Softmax of one logit vector, stabilized by subtracting the maximum.
pub fn softmax<E: Elem>(logits: &[E]) -> Vec<E> {
    assert!(!logits.is_empty(), "softmax of empty slice");
    let mut max = logits[0];
    for &v in &logits[1..] {
        max = max.maximum(v);
    }
    let mut exps: Vec<E> = logits.iter().map(|&v| (v - max).exp()).collect();
    let mut sum = E::ZERO;
    for &e in &exps {
        sum += e;
    }
    let inv = E::ONE / sum;
    for e in exps.iter_mut() {
        *e *= inv;
    }
    exps
}

/// Row-wise softmax of a rank-2 tensor `(N, C)`.
pub fn softmax_rows<E: Elem>(logits: &Tensor<E>) -> Tensor<E> {
    assert_eq!(logits.rank(), 2, "softmax_rows expects (N, C)");
    let (n, c) = (logits.shape[0], logits.shape[1]);
    let mut out = Tensor::zeros(&logits.shape);
    for i in 0..n {
        let row = softmax(&logits.data[i * c..(i + 1) * c]);
        out.data[i * c..(i + 1) * c].copy_from_slice(&row);
    }
    out
}
