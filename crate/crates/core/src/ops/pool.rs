//! Max pooling and global average pooling.
//!
//! Max pooling is always unpadded. With `ceil_mode` the output extent is
//! rounded up, so a trailing window that only partially overlaps the input
//! still produces an element (the window is clipped to the input). This is
//! what turns a 112-wide map into 56 under a 3x3/stride-2 pool. Ties take
//! the first maximum in row-major scan order, which keeps the backward
//! pass deterministic.

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// Output extent of an unpadded pooling window.
pub fn pool_out_dim(input: usize, window: usize, stride: usize, ceil_mode: bool) -> Result<usize> {
    if window == 0 || stride == 0 {
        return Err(Error::shape("pool window and stride must be >= 1"));
    }
    if window > input {
        return Err(Error::shape(format!(
            "pool window {window} larger than input {input}"
        )));
    }
    if window < stride {
        // A window smaller than the stride would skip input entirely and,
        // under ceil mode, could start past the end of the input.
        return Err(Error::shape(format!(
            "pool window {window} smaller than stride {stride}"
        )));
    }
    let span = input - window;
    Ok(if ceil_mode {
        span.div_ceil(stride) + 1
    } else {
        span / stride + 1
    })
}

/// Max pooling. Returns the pooled tensor and, per output element, the
/// flat index into `input.data` of the selected maximum (consumed by
/// [`maxpool2d_backward`]).
pub fn maxpool2d<E: Elem>(
    input: &Tensor<E>,
    window: usize,
    stride: usize,
    ceil_mode: bool,
) -> Result<(Tensor<E>, Vec<u32>)> {
    let (n_batch, c, h, w) = input.dims4()?;
    let oh = pool_out_dim(h, window, stride, ceil_mode)?;
    let ow = pool_out_dim(w, window, stride, ceil_mode)?;

    let mut out = Tensor::zeros(&[n_batch, c, oh, ow]);
    let mut argmax = vec![0u32; out.numel()];
    let mut oi = 0usize;
    for n in 0..n_batch {
        for ci in 0..c {
            for oy in 0..oh {
                let y0 = oy * stride;
                let y1 = (y0 + window).min(h);
                for ox in 0..ow {
                    let x0 = ox * stride;
                    let x1 = (x0 + window).min(w);
                    let mut best = input.at4(n, ci, y0, x0);
                    let mut best_idx = input.offset4(n, ci, y0, x0);
                    for y in y0..y1 {
                        let row_start = input.offset4(n, ci, y, 0);
                        for x in x0..x1 {
                            let v = input.data[row_start + x];
                            if v > best {
                                best = v;
                                best_idx = row_start + x;
                            }
                        }
                    }
                    out.data[oi] = best;
                    argmax[oi] = best_idx as u32;
                    oi += 1;
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Scatters each output gradient onto the input element that won its
/// window. Overlapping windows accumulate.
pub fn maxpool2d_backward<E: Elem>(
    input_shape: &[usize],
    argmax: &[u32],
    grad_out: &Tensor<E>,
) -> Tensor<E> {
    assert_eq!(argmax.len(), grad_out.numel(), "argmax/grad_out mismatch");
    let mut grad_input = Tensor::zeros(input_shape);
    for (i, &g) in grad_out.data.iter().enumerate() {
        grad_input.data[argmax[i] as usize] += g;
    }
    grad_input
}

/// Mean over the spatial extent of every channel: `(N, C, H, W) -> (N, C)`.
pub fn global_avgpool<E: Elem>(input: &Tensor<E>) -> Result<Tensor<E>> {
    let (n_batch, c, h, w) = input.dims4()?;
    if h * w == 0 {
        return Err(Error::shape("global average pool over empty spatial extent"));
    }
    let inv = E::from_f64(1.0 / (h * w) as f64);
    let mut out = Tensor::zeros(&[n_batch, c]);
    for n in 0..n_batch {
        for ci in 0..c {
            let mut acc = E::ZERO;
            for y in 0..h {
                for &v in input.row4(n, ci, y) {
                    acc += v;
                }
            }
            out.data[n * c + ci] = acc * inv;
        }
    }
    Ok(out)
}

/// Spreads each channel gradient uniformly over the pooled extent.
pub fn global_avgpool_backward<E: Elem>(grad_out: &Tensor<E>, h: usize, w: usize) -> Tensor<E> {
    assert_eq!(grad_out.rank(), 2, "grad_out must be (N, C)");
    let (n_batch, c) = (grad_out.shape[0], grad_out.shape[1]);
    let inv = E::from_f64(1.0 / (h * w) as f64);
    let mut grad_input = Tensor::zeros(&[n_batch, c, h, w]);
    for n in 0..n_batch {
        for ci in 0..c {
            let g = grad_out.data[n * c + ci] * inv;
            for y in 0..h {
                for v in grad_input.row4_mut(n, ci, y) {
                    *v = g;
                }
            }
        }
    }
    grad_input
}
