//! Channel-axis concatenation and its inverse.

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// Concatenates `(N, C_i, H, W)` tensors along the channel axis.
/// All parts must agree on `N`, `H` and `W`.
pub fn concat_channels<E: Elem>(parts: &[&Tensor<E>]) -> Result<Tensor<E>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat_channels needs at least one part"))?;
    let (n, _, h, w) = first.dims4()?;
    let mut c_total = 0;
    for p in parts {
        let (pn, pc, ph, pw) = p.dims4()?;
        if pn != n || ph != h || pw != w {
            return Err(Error::shape(format!(
                "concat_channels parts disagree: {:?} vs {:?}",
                first.shape, p.shape
            )));
        }
        c_total += pc;
    }
    let plane = h * w;
    let mut out = Tensor::zeros(&[n, c_total, h, w]);
    for ni in 0..n {
        let mut c_off = 0;
        for p in parts {
            let pc = p.shape[1];
            let slab = pc * plane;
            let src = &p.data[ni * slab..(ni + 1) * slab];
            let dst_start = ni * c_total * plane + c_off * plane;
            out.data[dst_start..dst_start + slab].copy_from_slice(src);
            c_off += pc;
        }
    }
    Ok(out)
}

/// Splits a `(N, C, H, W)` tensor into channel blocks of the given widths.
/// Exact inverse of [`concat_channels`]; also serves as its backward.
pub fn split_channels<E: Elem>(t: &Tensor<E>, widths: &[usize]) -> Result<Vec<Tensor<E>>> {
    let (n, c, h, w) = t.dims4()?;
    if widths.iter().sum::<usize>() != c {
        return Err(Error::shape(format!(
            "split widths {:?} do not sum to {c} channels",
            widths
        )));
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(widths.len());
    let mut c_off = 0;
    for &pc in widths {
        let mut part = Tensor::zeros(&[n, pc, h, w]);
        let slab = pc * plane;
        for ni in 0..n {
            let src_start = ni * c * plane + c_off * plane;
            part.data[ni * slab..(ni + 1) * slab]
                .copy_from_slice(&t.data[src_start..src_start + slab]);
        }
        out.push(part);
        c_off += pc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_stacks_channel_blocks() {
        let a = Tensor::from_fn(&[1, 2, 2, 2], |i| i as f32);
        let b = Tensor::from_fn(&[1, 1, 2, 2], |i| 100.0 + i as f32);
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape, vec![1, 3, 2, 2]);
        assert_eq!(&cat.data[0..8], &a.data[..]);
        assert_eq!(&cat.data[8..12], &b.data[..]);
    }

    #[test]
    fn split_inverts_concat() {
        let a = Tensor::from_fn(&[2, 3, 4, 5], |i| (i as f32).sin());
        let b = Tensor::from_fn(&[2, 2, 4, 5], |i| (i as f32).cos());
        let c = Tensor::from_fn(&[2, 4, 4, 5], |i| i as f32 * 0.25);
        let cat = concat_channels(&[&a, &b, &c]).unwrap();
        let parts = split_channels(&cat, &[3, 2, 4]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
        assert_eq!(parts[2], c);
    }

    #[test]
    fn mismatched_extents_are_rejected() {
        let a = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        let b = Tensor::<f32>::zeros(&[1, 2, 2, 2]);
        assert!(concat_channels(&[&a, &b]).is_err());
        assert!(split_channels(&a, &[1, 2]).is_err());
    }
}
