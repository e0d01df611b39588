//! Named-parameter bookkeeping shared by the network modules.
//!
//! Parameters live inside typed layer structs; everything that needs to
//! treat them uniformly (checkpointing, SGD, weight-decay grouping,
//! gradient accumulation) works through hierarchical names such as
//! `dsf4.point.weight` or `mff1.lateral.dsf7.gamma`. The name suffix
//! encodes the parameter's role:
//!
//! - `.weight`        convolution kernel (decayed)
//! - `.bias`          additive bias (never decayed)
//! - `.gamma`/`.beta` batch-norm scale/shift (never decayed)
//! - `.running_mean`/`.running_var` batch-norm statistics (not trained)

use std::collections::BTreeMap;

use crate::rng::Lcg64;
use crate::tensor::{Elem, Tensor};

/// Standard deviation used for every freshly initialized convolution
/// kernel. Batch normalization after each layer keeps activations scaled,
/// so a single small Gaussian works for the whole stack.
pub const WEIGHT_INIT_STD: f64 = 0.01;

/// Gaussian-initialized tensor drawn from `rng`. The draws happen in
/// `f64`, so an `f32` network and its `f64` twin built from the same seed
/// hold the same values up to rounding.
pub fn gaussian_tensor<E: Elem>(rng: &mut Lcg64, shape: &[usize], std_dev: f64) -> Tensor<E> {
    Tensor::from_fn(shape, |_| E::from_f64(rng.normal_scaled(std_dev)))
}

/// Accumulator for parameter gradients, keyed by parameter name.
/// Adding a gradient twice sums elementwise, which is how shared layers
/// (e.g. the backbone under two fusion blocks) combine their paths.
#[derive(Debug)]
pub struct Grads<E: Elem = f32> {
    map: BTreeMap<String, Tensor<E>>,
}

impl<E: Elem> Default for Grads<E> {
    fn default() -> Self {
        Grads { map: BTreeMap::new() }
    }
}

impl<E: Elem> Grads<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, grad: Tensor<E>) {
        let name = name.into();
        match self.map.get_mut(&name) {
            Some(existing) => existing.add_assign(&grad),
            None => {
                self.map.insert(name, grad);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<E>> {
        self.map.get(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    /// Name of the first non-finite gradient element's parameter, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        for (name, t) in &self.map {
            if t.data.iter().any(|v| !v.is_finite()) {
                return Some(name);
            }
        }
        None
    }
}

/// Whether weight decay applies to the named parameter. Only convolution
/// kernels are decayed; biases and batch-norm scale/shift are not.
pub fn decay_applies(name: &str) -> bool {
    name.ends_with(".weight")
}
