//! 2-D convolution (cross-correlation) and its depthwise variant.
//!
//! Standard convolution takes an `(N, P, H, W)` input and a `(Q, P, K, K)`
//! weight and produces `(N, Q, H', W')` with
//! `H' = (H + 2*pad - K) / stride + 1` (floor). Each output element is the
//! sum over all `P` input channels of a `K x K` window product, plus an
//! optional per-output-channel bias.
//!
//! Depthwise convolution applies one `(K, K)` filter per channel — weight
//! shape `(C, K, K)` — and never mixes channels; channel mixing is left to
//! the 1x1 pointwise convolution that follows it in a separable pair.
//!
//! The inner loops are arranged so the innermost dimension walks a
//! contiguous output row (an axpy per kernel tap), which the compiler
//! vectorizes; per output element the accumulation order over
//! `(p, ky, kx)` is fixed, keeping results deterministic.

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// Output spatial extent of a convolution, or an error when the kernel
/// does not fit into the padded input.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::shape("stride must be >= 1"));
    }
    if kernel == 0 {
        return Err(Error::shape("kernel must be >= 1"));
    }
    let padded = input + 2 * pad;
    if kernel > padded {
        return Err(Error::shape(format!(
            "kernel {kernel} larger than padded input {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Zero-pads the two spatial dimensions of a rank-4 tensor.
fn pad4<E: Elem>(input: &Tensor<E>, pad: usize) -> Tensor<E> {
    let (n, c, h, w) = (
        input.shape[0],
        input.shape[1],
        input.shape[2],
        input.shape[3],
    );
    let mut out = Tensor::zeros(&[n, c, h + 2 * pad, w + 2 * pad]);
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                let src = input.row4(ni, ci, y);
                let dst = out.row4_mut(ni, ci, y + pad);
                dst[pad..pad + w].copy_from_slice(src);
            }
        }
    }
    out
}

/// Crops `pad` from each spatial border (inverse of [`pad4`]).
fn crop4<E: Elem>(input: &Tensor<E>, pad: usize) -> Tensor<E> {
    let (n, c, hp, wp) = (
        input.shape[0],
        input.shape[1],
        input.shape[2],
        input.shape[3],
    );
    let (h, w) = (hp - 2 * pad, wp - 2 * pad);
    let mut out = Tensor::zeros(&[n, c, h, w]);
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                let src = &input.row4(ni, ci, y + pad)[pad..pad + w];
                out.row4_mut(ni, ci, y).copy_from_slice(src);
            }
        }
    }
    out
}

fn check_conv_shapes<E: Elem>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    bias: Option<&Tensor<E>>,
) -> Result<()> {
    let (_, p_in, _, _) = input.dims4()?;
    let (q_out, p_w, kh, kw) = weight.dims4()?;
    if p_w != p_in {
        return Err(Error::shape(format!(
            "weight expects {p_w} input channels, input has {p_in}"
        )));
    }
    if kh != kw {
        return Err(Error::shape(format!("kernel must be square, got {kh}x{kw}")));
    }
    if let Some(b) = bias {
        if b.shape != [q_out] {
            return Err(Error::shape(format!(
                "bias shape {:?} does not match {q_out} output channels",
                b.shape
            )));
        }
    }
    Ok(())
}

/// Standard convolution. `weight` is `(Q, P, K, K)`; `bias`, when present,
/// is `(Q,)`.
pub fn conv2d<E: Elem>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    bias: Option<&Tensor<E>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<E>> {
    check_conv_shapes(input, weight, bias)?;
    let (n_batch, p_in, h, w) = input.dims4()?;
    let (q_out, _, k, _) = weight.dims4()?;
    let oh = conv_out_dim(h, k, stride, pad)?;
    let ow = conv_out_dim(w, k, stride, pad)?;

    let padded_store;
    let padded = if pad > 0 {
        padded_store = pad4(input, pad);
        &padded_store
    } else {
        input
    };

    let mut out = Tensor::zeros(&[n_batch, q_out, oh, ow]);
    for n in 0..n_batch {
        for q in 0..q_out {
            if let Some(b) = bias {
                let bq = b.data[q];
                for y in 0..oh {
                    for v in out.row4_mut(n, q, y) {
                        *v = bq;
                    }
                }
            }
            for p in 0..p_in {
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = weight.at4(q, p, ky, kx);
                        for y in 0..oh {
                            let in_row = padded.row4(n, p, y * stride + ky);
                            let out_row = out.row4_mut(n, q, y);
                            if stride == 1 {
                                for (o, i) in out_row.iter_mut().zip(&in_row[kx..kx + ow]) {
                                    *o += wv * *i;
                                }
                            } else {
                                for (o, i) in out_row
                                    .iter_mut()
                                    .zip(in_row[kx..].iter().step_by(stride))
                                {
                                    *o += wv * *i;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub struct Conv2dGrads<E: Elem> {
    pub input: Tensor<E>,
    pub weight: Tensor<E>,
    /// Always computed (it is just a sum over the output); ignore it for
    /// bias-free layers.
    pub bias: Tensor<E>,
}

pub fn conv2d_backward<E: Elem>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    grad_out: &Tensor<E>,
    stride: usize,
    pad: usize,
) -> Result<Conv2dGrads<E>> {
    check_conv_shapes(input, weight, None)?;
    let (n_batch, p_in, h, w) = input.dims4()?;
    let (q_out, _, k, _) = weight.dims4()?;
    let oh = conv_out_dim(h, k, stride, pad)?;
    let ow = conv_out_dim(w, k, stride, pad)?;
    let (gn, gq, goh, gow) = grad_out.dims4()?;
    if (gn, gq, goh, gow) != (n_batch, q_out, oh, ow) {
        return Err(Error::shape(format!(
            "grad_out shape {:?} does not match expected ({n_batch}, {q_out}, {oh}, {ow})",
            grad_out.shape
        )));
    }

    let padded_store;
    let padded = if pad > 0 {
        padded_store = pad4(input, pad);
        &padded_store
    } else {
        input
    };

    let mut grad_bias = Tensor::zeros(&[q_out]);
    for n in 0..n_batch {
        for q in 0..q_out {
            let mut acc = E::ZERO;
            for y in 0..oh {
                for &g in grad_out.row4(n, q, y) {
                    acc += g;
                }
            }
            grad_bias.data[q] += acc;
        }
    }

    let mut grad_weight = Tensor::zeros(&weight.shape);
    for n in 0..n_batch {
        for q in 0..q_out {
            for p in 0..p_in {
                for ky in 0..k {
                    for kx in 0..k {
                        let mut acc = E::ZERO;
                        for y in 0..oh {
                            let g_row = grad_out.row4(n, q, y);
                            let in_row = padded.row4(n, p, y * stride + ky);
                            if stride == 1 {
                                for (g, i) in g_row.iter().zip(&in_row[kx..kx + ow]) {
                                    acc += *g * *i;
                                }
                            } else {
                                for (g, i) in
                                    g_row.iter().zip(in_row[kx..].iter().step_by(stride))
                                {
                                    acc += *g * *i;
                                }
                            }
                        }
                        let idx = grad_weight.offset4(q, p, ky, kx);
                        grad_weight.data[idx] += acc;
                    }
                }
            }
        }
    }

    let mut grad_padded = Tensor::<E>::zeros(&[n_batch, p_in, h + 2 * pad, w + 2 * pad]);
    for n in 0..n_batch {
        for p in 0..p_in {
            for q in 0..q_out {
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = weight.at4(q, p, ky, kx);
                        for y in 0..oh {
                            let g_row_start = grad_out.offset4(n, q, y, 0);
                            let gp_row = grad_padded.row4_mut(n, p, y * stride + ky);
                            if stride == 1 {
                                for (gp, g) in gp_row[kx..kx + ow]
                                    .iter_mut()
                                    .zip(&grad_out.data[g_row_start..g_row_start + ow])
                                {
                                    *gp += wv * *g;
                                }
                            } else {
                                for (x, g) in
                                    grad_out.data[g_row_start..g_row_start + ow].iter().enumerate()
                                {
                                    gp_row[x * stride + kx] += wv * *g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let grad_input = if pad > 0 {
        crop4(&grad_padded, pad)
    } else {
        grad_padded
    };

    Ok(Conv2dGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}

fn check_depthwise_shapes<E: Elem>(input: &Tensor<E>, weight: &Tensor<E>) -> Result<()> {
    let (_, c_in, _, _) = input.dims4()?;
    if weight.rank() != 3 {
        return Err(Error::shape(format!(
            "depthwise weight must be rank 3 (C, K, K), got {:?}",
            weight.shape
        )));
    }
    let (c_w, kh, kw) = (weight.shape[0], weight.shape[1], weight.shape[2]);
    if c_w != c_in {
        return Err(Error::shape(format!(
            "depthwise weight has {c_w} channels, input has {c_in}"
        )));
    }
    if kh != kw {
        return Err(Error::shape(format!("kernel must be square, got {kh}x{kw}")));
    }
    Ok(())
}

/// Depthwise convolution: one filter per channel, weight shape `(C, K, K)`.
/// No bias — in this crate a depthwise layer is always followed by
/// batch normalization, which has its own shift.
pub fn depthwise_conv2d<E: Elem>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<E>> {
    check_depthwise_shapes(input, weight)?;
    let (n_batch, c, h, w) = input.dims4()?;
    let k = weight.shape[1];
    let oh = conv_out_dim(h, k, stride, pad)?;
    let ow = conv_out_dim(w, k, stride, pad)?;

    let padded_store;
    let padded = if pad > 0 {
        padded_store = pad4(input, pad);
        &padded_store
    } else {
        input
    };

    let mut out = Tensor::zeros(&[n_batch, c, oh, ow]);
    for n in 0..n_batch {
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight.data[(ci * k + ky) * k + kx];
                    for y in 0..oh {
                        let in_row = padded.row4(n, ci, y * stride + ky);
                        let out_row = out.row4_mut(n, ci, y);
                        if stride == 1 {
                            for (o, i) in out_row.iter_mut().zip(&in_row[kx..kx + ow]) {
                                *o += wv * *i;
                            }
                        } else {
                            for (o, i) in
                                out_row.iter_mut().zip(in_row[kx..].iter().step_by(stride))
                            {
                                *o += wv * *i;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub struct DepthwiseGrads<E: Elem> {
    pub input: Tensor<E>,
    pub weight: Tensor<E>,
}

pub fn depthwise_conv2d_backward<E: Elem>(
    input: &Tensor<E>,
    weight: &Tensor<E>,
    grad_out: &Tensor<E>,
    stride: usize,
    pad: usize,
) -> Result<DepthwiseGrads<E>> {
    check_depthwise_shapes(input, weight)?;
    let (n_batch, c, h, w) = input.dims4()?;
    let k = weight.shape[1];
    let oh = conv_out_dim(h, k, stride, pad)?;
    let ow = conv_out_dim(w, k, stride, pad)?;
    if grad_out.shape != [n_batch, c, oh, ow] {
        return Err(Error::shape(format!(
            "grad_out shape {:?} does not match expected ({n_batch}, {c}, {oh}, {ow})",
            grad_out.shape
        )));
    }

    let padded_store;
    let padded = if pad > 0 {
        padded_store = pad4(input, pad);
        &padded_store
    } else {
        input
    };

    let mut grad_weight = Tensor::zeros(&weight.shape);
    let mut grad_padded = Tensor::<E>::zeros(&[n_batch, c, h + 2 * pad, w + 2 * pad]);
    for n in 0..n_batch {
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight.data[(ci * k + ky) * k + kx];
                    let mut acc = E::ZERO;
                    for y in 0..oh {
                        let g_start = grad_out.offset4(n, ci, y, 0);
                        let g_row = &grad_out.data[g_start..g_start + ow];
                        let in_row = padded.row4(n, ci, y * stride + ky);
                        if stride == 1 {
                            for (g, i) in g_row.iter().zip(&in_row[kx..kx + ow]) {
                                acc += *g * *i;
                            }
                        } else {
                            for (g, i) in g_row.iter().zip(in_row[kx..].iter().step_by(stride)) {
                                acc += *g * *i;
                            }
                        }
                        let gp_row = grad_padded.row4_mut(n, ci, y * stride + ky);
                        if stride == 1 {
                            for (gp, g) in gp_row[kx..kx + ow].iter_mut().zip(g_row) {
                            *gp += wv * *g;
                            }
                        } else {
                            for (x, g) in g_row.iter().enumerate() {
                                gp_row[x * stride + kx] += wv * *g;
                            }
                        }
                    }
                    grad_weight.data[(ci * k + ky) * k + kx] += acc;
                }
            }
        }
    }
    let grad_input = if pad > 0 {
        crop4(&grad_padded, pad)
    } else {
        grad_padded
    };
    Ok(DepthwiseGrads {
        input: grad_input,
        weight: grad_weight,
    })
}
