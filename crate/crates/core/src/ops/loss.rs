//! Classification and box-regression loss terms.

use crate::ops::activ::softmax;
use crate::tensor::Elem;

/// Cross-entropy of a softmax over `logits` against the `target` class.
/// Returns the loss `-ln p[target]` and the gradient with respect to the
/// logits (`p - onehot(target)`), both computed in one pass.
pub fn softmax_cross_entropy<E: Elem>(logits: &[E], target: usize) -> (E, Vec<E>) {
    assert!(target < logits.len(), "target class out of range");
    let probs = softmax(logits);
    let loss = -(probs[target].ln());
    let mut grad = probs;
    grad[target] -= E::ONE;
    (loss, grad)
}

/// Smooth L1 (Huber with unit transition) of a single residual:
/// `0.5 d^2` for `|d| < 1`, `|d| - 0.5` otherwise. Returns the value and
/// its derivative with respect to `d`.
pub fn smooth_l1<E: Elem>(d: E) -> (E, E) {
    let half = E::from_f64(0.5);
    if d.abs() < E::ONE {
        (half * d * d, d)
    } else if d > E::ZERO {
        (d - half, E::ONE)
    } else {
        (-d - half, -E::ONE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_of_fifty_fifty_is_ln_two() {
        let (loss, grad) = softmax_cross_entropy(&[0.0f64, 0.0], 1);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((grad[0] - 0.5).abs() < 1e-12);
        assert!((grad[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero() {
        let (_, grad) = softmax_cross_entropy(&[0.3f64, -1.2, 2.0, 0.0], 2);
        let sum: f64 = grad.iter().sum();
        assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn smooth_l1_values() {
        // Quadratic region.
        let (v, d) = smooth_l1(0.5f64);
        assert!((v - 0.125).abs() < 1e-12);
        assert!((d - 0.5).abs() < 1e-12);
        // Transition point: 0.5 * 1^2 = 1 - 0.5 on both branches.
        let (v, _) = smooth_l1(1.0f64);
        assert!((v - 0.5).abs() < 1e-12);
        // Linear region.
        let (v, d) = smooth_l1(-3.0f64);
        assert!((v - 2.5).abs() < 1e-12);
        assert!((d + 1.0).abs() < 1e-12);
    }
}
