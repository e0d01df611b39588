//! Batch normalization.
//!
//! Training mode normalizes each channel with the biased mean/variance of
//! the current batch (over `N x H x W`), applies the learned scale and
//! shift, and folds the batch statistics into running estimates. Inference
//! mode normalizes with the stored running estimates only.

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// Variance floor added before the square root.
pub const BN_EPS: f64 = 1e-5;
/// Fraction of the previous running statistic kept on each training step:
/// `running = BN_MOMENTUM * running + (1 - BN_MOMENTUM) * batch`.
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel parameters and running statistics. All four tensors are
/// rank 1 with length `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams<E: Elem = f32> {
    pub gamma: Tensor<E>,
    pub beta: Tensor<E>,
    pub running_mean: Tensor<E>,
    pub running_var: Tensor<E>,
}

impl<E: Elem> BnParams<E> {
    /// Fresh parameters: unit scale, zero shift, standard-normal running
    /// statistics — the identity transform at initialization.
    pub fn identity(channels: usize) -> Self {
        BnParams {
            gamma: Tensor::filled(&[channels], E::ONE),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], E::ONE),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }
}

/// Everything the backward pass needs from a training-mode forward.
pub struct BnCache<E: Elem> {
    /// Normalized input, before scale and shift.
    pub xhat: Tensor<E>,
    /// Per-channel `1 / sqrt(var + eps)`.
    pub inv_std: Vec<E>,
}

fn check_channels<E: Elem>(input: &Tensor<E>, bn: &BnParams<E>) -> Result<(usize, usize, usize, usize)> {
    let dims = input.dims4()?;
    if dims.1 != bn.channels() {
        return Err(Error::shape(format!(
            "batchnorm has {} channels, input has {}",
            bn.channels(),
            dims.1
        )));
    }
    Ok(dims)
}

/// Training-mode forward. Updates the running statistics in place and
/// returns the output together with the cache for the backward pass.
pub fn batchnorm_train<E: Elem>(
    input: &Tensor<E>,
    bn: &mut BnParams<E>,
) -> Result<(Tensor<E>, BnCache<E>)> {
    let (n_batch, c, h, w) = check_channels(input, bn)?;
    let m = n_batch * h * w;
    if m == 0 {
        return Err(Error::shape("batchnorm over an empty batch"));
    }
    let inv_m = E::from_f64(1.0 / m as f64);
    let eps = E::from_f64(BN_EPS);
    let keep = E::from_f64(BN_MOMENTUM);
    let take = E::from_f64(1.0 - BN_MOMENTUM);

    let mut out = Tensor::zeros(&input.shape);
    let mut xhat = Tensor::zeros(&input.shape);
    let mut inv_std = vec![E::ZERO; c];
    for ci in 0..c {
        let mut sum = E::ZERO;
        let mut sum_sq = E::ZERO;
        for n in 0..n_batch {
            for y in 0..h {
                for &v in input.row4(n, ci, y) {
                    sum += v;
                    sum_sq += v * v;
                }
            }
        }
        let mean = sum * inv_m;
        let var = (sum_sq * inv_m - mean * mean).maximum(E::ZERO);
        let istd = E::ONE / (var + eps).sqrt();
        inv_std[ci] = istd;

        bn.running_mean.data[ci] = keep * bn.running_mean.data[ci] + take * mean;
        bn.running_var.data[ci] = keep * bn.running_var.data[ci] + take * var;

        let g = bn.gamma.data[ci];
        let b = bn.beta.data[ci];
        for n in 0..n_batch {
            for y in 0..h {
                let start = input.offset4(n, ci, y, 0);
                for x in 0..w {
                    let xh = (input.data[start + x] - mean) * istd;
                    xhat.data[start + x] = xh;
                    out.data[start + x] = g * xh + b;
                }
            }
        }
    }
    Ok((out, BnCache { xhat, inv_std }))
}

/// Inference-mode forward using the running statistics.
pub fn batchnorm_infer<E: Elem>(input: &Tensor<E>, bn: &BnParams<E>) -> Result<Tensor<E>> {
    let (n_batch, c, h, w) = check_channels(input, bn)?;
    let eps = E::from_f64(BN_EPS);
    let mut out = Tensor::zeros(&input.shape);
    for ci in 0..c {
        let istd = E::ONE / (bn.running_var.data[ci] + eps).sqrt();
        // Fold everything into one scale and shift per channel.
        let scale = bn.gamma.data[ci] * istd;
        let shift = bn.beta.data[ci] - bn.running_mean.data[ci] * scale;
        for n in 0..n_batch {
            for y in 0..h {
                let start = input.offset4(n, ci, y, 0);
                for x in 0..w {
                    out.data[start + x] = input.data[start + x] * scale + shift;
                }
            }
        }
    }
    Ok(out)
}

/// Backward through a training-mode forward. Returns gradients for the
/// input, gamma and beta.
pub fn batchnorm_backward<E: Elem>(
    grad_out: &Tensor<E>,
    cache: &BnCache<E>,
    gamma: &Tensor<E>,
) -> (Tensor<E>, Tensor<E>, Tensor<E>) {
    let (n_batch, c, h, w) = (
        grad_out.shape[0],
        grad_out.shape[1],
        grad_out.shape[2],
        grad_out.shape[3],
    );
    let m = n_batch * h * w;
    let inv_m = E::from_f64(1.0 / m as f64);

    let mut grad_input = Tensor::zeros(&grad_out.shape);
    let mut grad_gamma = Tensor::zeros(&[c]);
    let mut grad_beta = Tensor::zeros(&[c]);
    for ci in 0..c {
        let mut sum_g = E::ZERO;
        let mut sum_gx = E::ZERO;
        for n in 0..n_batch {
            for y in 0..h {
                let start = grad_out.offset4(n, ci, y, 0);
                for x in 0..w {
                    let g = grad_out.data[start + x];
                    sum_g += g;
                    sum_gx += g * cache.xhat.data[start + x];
                }
            }
        }
        grad_beta.data[ci] = sum_g;
        grad_gamma.data[ci] = sum_gx;

        // d/dx of (gamma * xhat + beta) with batch statistics as functions
        // of x: gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat)).
        let coeff = gamma.data[ci] * cache.inv_std[ci];
        let mean_g = sum_g * inv_m;
        let mean_gx = sum_gx * inv_m;
        for n in 0..n_batch {
            for y in 0..h {
                let start = grad_out.offset4(n, ci, y, 0);
                for x in 0..w {
                    let g = grad_out.data[start + x];
                    let xh = cache.xhat.data[start + x];
                    grad_input.data[start + x] = coeff * (g - mean_g - xh * mean_gx);
                }
            }
        }
    }
    (grad_input, grad_gamma, grad_beta)
}
