//! Dense row-major tensor over `f32` or `f64`.
//!
//! Layout convention for rank-4 tensors is `(N, C, H, W)`: batch, channel,
//! row, column. The innermost (fastest-varying) axis is `W`, so a single
//! image row is a contiguous slice — the compute kernels in [`crate::ops`]
//! rely on that for vectorizable inner loops.
//!
//! The element type is generic so the same kernels can run in `f32` for
//! training/inference and in `f64` for reference oracles and
//! finite-difference gradient checks.

use crate::error::{Error, Result};

/// Scalar element of a [`Tensor`]: `f32` or `f64`.
pub trait Elem:
    Copy
    + PartialOrd
    + std::fmt::Debug
    + std::fmt::Display
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Send
    + Sync
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, other: Self) -> Self;
    fn is_finite(self) -> bool;
}

macro_rules! impl_elem {
    ($t:ty) => {
        impl Elem for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            #[inline(always)]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline(always)]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline(always)]
            fn exp(self) -> Self {
                self.exp()
            }
            #[inline(always)]
            fn ln(self) -> Self {
                self.ln()
            }
            #[inline(always)]
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            #[inline(always)]
            fn abs(self) -> Self {
                self.abs()
            }
            #[inline(always)]
            fn maximum(self, other: Self) -> Self {
                if self > other {
                    self
                } else {
                    other
                }
            }
            #[inline(always)]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}

impl_elem!(f32);
impl_elem!(f64);

/// Dense row-major tensor. Shape and data are public; the constructors
/// guarantee `data.len() == shape.iter().product()` and all code that
/// mutates a tensor is expected to preserve that.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E: Elem = f32> {
    pub shape: Vec<usize>,
    pub data: Vec<E>,
}

impl<E: Elem> Tensor<E> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![E::ZERO; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: E) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// Wraps an existing buffer. Panics if the element count does not match
    /// the shape — this is a programming error, not a runtime condition.
    pub fn from_vec(shape: &[usize], data: Vec<E>) -> Self {
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> E) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|i| f(i)).collect(),
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Destructures the shape of a rank-4 tensor as `(n, c, h, w)`.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        if self.shape.len() != 4 {
            return Err(Error::shape(format!(
                "expected rank-4 tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok((self.shape[0], self.shape[1], self.shape[2], self.shape[3]))
    }

    /// Flat offset of element `(n, c, y, x)` in a rank-4 tensor.
    #[inline(always)]
    pub fn offset4(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline(always)]
    pub fn at4(&self, n: usize, c: usize, y: usize, x: usize) -> E {
        self.data[self.offset4(n, c, y, x)]
    }

    #[inline(always)]
    pub fn set4(&mut self, n: usize, c: usize, y: usize, x: usize, v: E) {
        let i = self.offset4(n, c, y, x);
        self.data[i] = v;
    }

    /// Contiguous row `(n, c, y, ..)` of a rank-4 tensor.
    #[inline(always)]
    pub fn row4(&self, n: usize, c: usize, y: usize) -> &[E] {
        let w = self.shape[3];
        let start = self.offset4(n, c, y, 0);
        &self.data[start..start + w]
    }

    #[inline(always)]
    pub fn row4_mut(&mut self, n: usize, c: usize, y: usize) -> &mut [E] {
        let w = self.shape[3];
        let start = self.offset4(n, c, y, 0);
        &mut self.data[start..start + w]
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise accumulate: `self += other`. Panics on shape mismatch.
    pub fn add_assign(&mut self, other: &Tensor<E>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: E) {
        for v in self.data.iter_mut() {
            *v *= s;
        }
    }

    /// Largest absolute elementwise difference; `None` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor<E>) -> Option<f64> {
        if self.shape != other.shape {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
                .fold(0.0, f64::max),
        )
    }

    /// Converts the element type (e.g. an `f64` oracle input to `f32`).
    pub fn cast<F: Elem>(&self) -> Tensor<F> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| F::from_f64(v.to_f64())).collect(),
        }
    }
}
