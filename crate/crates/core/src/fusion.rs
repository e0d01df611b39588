//! Multi-scale feature fusion.
//!
//! Two fusion blocks consume the backbone taps. Both first align the taps
//! to stride 16 (the stride-8 `dsf4` tap goes through a 2x2 max pool),
//! push every enabled tap through its own bias-free 1x1 lateral
//! convolution plus batch normalization, and concatenate the results in
//! the fixed order (dsf4, dsf7, dsf9). They differ after the
//! concatenation:
//!
//! - the first block applies one biased 3x3 convolution and a ReLU,
//!   producing the proposal-network input map;
//! - the second applies a biased 1x1 encoding convolution, a biased 1x1
//!   reduction convolution, then a single ReLU, producing the
//!   position-sensitive head input map.
//!
//! Taps can be switched off individually (with a wider lateral making up
//! the concatenation width) to reproduce tap-set comparison experiments.

use crate::backbone::Features;
use crate::error::{Error, Result};
use crate::ops;
use crate::params::{gaussian_tensor, Grads, WEIGHT_INIT_STD};
use crate::rng::Lcg64;
use crate::tensor::{Elem, Tensor};

/// Which backbone taps participate in fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapSet {
    pub dsf4: bool,
    pub dsf7: bool,
    pub dsf9: bool,
}

impl TapSet {
    /// The standard three-tap wiring.
    pub fn all() -> Self {
        TapSet {
            dsf4: true,
            dsf7: true,
            dsf9: true,
        }
    }

    /// The two-tap comparison wiring (shallow detail + deepest semantics).
    pub fn pair_4_9() -> Self {
        TapSet {
            dsf4: true,
            dsf7: false,
            dsf9: true,
        }
    }

    pub fn count(&self) -> usize {
        self.dsf4 as usize + self.dsf7 as usize + self.dsf9 as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.count() == 0 {
            return Err(Error::config("fusion needs at least one enabled tap"));
        }
        Ok(())
    }
}

/// Widths of both fusion blocks. `full()` matches the published wiring;
/// `toy(divisor)` scales everything for desk-size runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionCfg {
    pub taps: TapSet,
    /// Output width of every lateral 1x1 convolution.
    pub lateral_width: usize,
    /// First block's fused output width.
    pub mff1_out: usize,
    /// Second block's encoding width.
    pub mff2_mid: usize,
    /// Second block's reduced output width.
    pub mff2_out: usize,
}

impl FusionCfg {
    /// Three 192-wide laterals, 512-wide proposal map, 512 -> 256 head map.
    pub fn full() -> Self {
        FusionCfg {
            taps: TapSet::all(),
            lateral_width: 192,
            mff1_out: 512,
            mff2_mid: 512,
            mff2_out: 256,
        }
    }

    /// Two 256-wide laterals over (dsf4, dsf9); concatenation width stays
    /// 512.
    pub fn pair_4_9() -> Self {
        FusionCfg {
            taps: TapSet::pair_4_9(),
            lateral_width: 256,
            ..Self::full()
        }
    }

    /// Full widths divided by `divisor`.
    pub fn toy(divisor: usize) -> Self {
        let full = Self::full();
        FusionCfg {
            taps: full.taps,
            lateral_width: full.lateral_width / divisor,
            mff1_out: full.mff1_out / divisor,
            mff2_mid: full.mff2_mid / divisor,
            mff2_out: full.mff2_out / divisor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.taps.validate()?;
        if self.lateral_width == 0
            || self.mff1_out == 0
            || self.mff2_mid == 0
            || self.mff2_out == 0
        {
            return Err(Error::config("fusion widths must be positive"));
        }
        Ok(())
    }

    /// Channel width of the concatenated lateral stack.
    pub fn concat_width(&self) -> usize {
        self.lateral_width * self.taps.count()
    }
}

// ---------------------------------------------------------------------------
// Tap alignment
// ---------------------------------------------------------------------------

/// Pools the stride-8 tap down to stride 16 and checks that all taps
/// cover the same grid. Returns the pooled tap and its argmax trace.
fn align_dsf4<E: Elem>(feats: &Features<E>) -> Result<(Tensor<E>, Vec<u32>)> {
    let (_, _, h4, w4) = feats.dsf4.dims4()?;
    let (_, _, h7, w7) = feats.dsf7.dims4()?;
    if h4 != 2 * h7 || w4 != 2 * w7 {
        return Err(Error::shape(format!(
            "stride-8 tap {h4}x{w4} is not exactly twice the stride-16 grid {h7}x{w7}"
        )));
    }
    if feats.dsf9.shape[2] != h7 || feats.dsf9.shape[3] != w7 {
        return Err(Error::shape("stride-16 taps disagree on grid size"));
    }
    ops::maxpool2d(&feats.dsf4, 2, 2, false)
}

// ---------------------------------------------------------------------------
// Lateral branch
// ---------------------------------------------------------------------------

/// Bias-free 1x1 convolution + batch norm, no activation.
#[derive(Debug, Clone)]
struct Lateral<E: Elem> {
    weight: Tensor<E>, // (L, C, 1, 1)
    bn: ops::BnParams<E>,
}

struct LateralTrace<E: Elem> {
    input: Tensor<E>,
    bn: ops::BnCache<E>,
}

impl<E: Elem> Lateral<E> {
    fn new(rng: &mut Lcg64, width: usize, c_in: usize) -> Self {
        Lateral {
            weight: gaussian_tensor(rng, &[width, c_in, 1, 1], WEIGHT_INIT_STD),
            bn: ops::BnParams::identity(width),
        }
    }

    fn forward_infer(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let y = ops::conv2d(x, &self.weight, None, 1, 0)?;
        ops::batchnorm_infer(&y, &self.bn)
    }

    fn forward_train(&mut self, x: &Tensor<E>) -> Result<(Tensor<E>, LateralTrace<E>)> {
        let y = ops::conv2d(x, &self.weight, None, 1, 0)?;
        let (out, bn) = ops::batchnorm_train(&y, &mut self.bn)?;
        Ok((
            out,
            LateralTrace {
                input: x.clone(),
                bn,
            },
        ))
    }

    fn backward(
        &self,
        prefix: &str,
        trace: &LateralTrace<E>,
        grad_out: &Tensor<E>,
        grads: &mut Grads<E>,
    ) -> Result<Tensor<E>> {
        let (g_conv, g_gamma, g_beta) = ops::batchnorm_backward(grad_out, &trace.bn, &self.bn.gamma);
        let conv_grads = ops::conv2d_backward(&trace.input, &self.weight, &g_conv, 1, 0)?;
        grads.add(format!("{prefix}.weight"), conv_grads.weight);
        grads.add(format!("{prefix}.gamma"), g_gamma);
        grads.add(format!("{prefix}.beta"), g_beta);
        Ok(conv_grads.input)
    }

    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<E>)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.gamma"), &self.bn.gamma));
        out.push((format!("{prefix}.beta"), &self.bn.beta));
        out.push((format!("{prefix}.running_mean"), &self.bn.running_mean));
        out.push((format!("{prefix}.running_var"), &self.bn.running_var));
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<E>)>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.gamma"), &mut self.bn.gamma));
        out.push((format!("{prefix}.beta"), &mut self.bn.beta));
        out.push((format!("{prefix}.running_mean"), &mut self.bn.running_mean));
        out.push((format!("{prefix}.running_var"), &mut self.bn.running_var));
    }

    fn collect_trainable_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Tensor<E>)>,
    ) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.gamma"), &mut self.bn.gamma));
        out.push((format!("{prefix}.beta"), &mut self.bn.beta));
    }
}

/// The three optional laterals of one fusion block.
#[derive(Debug, Clone)]
struct Laterals<E: Elem> {
    dsf4: Option<Lateral<E>>,
    dsf7: Option<Lateral<E>>,
    dsf9: Option<Lateral<E>>,
}

struct LateralsTrace<E: Elem> {
    dsf4_pool: Option<(Vec<u32>, Vec<usize>)>, // (argmax, pre-pool shape)
    dsf4: Option<LateralTrace<E>>,
    dsf7: Option<LateralTrace<E>>,
    dsf9: Option<LateralTrace<E>>,
    lateral_width: usize,
}

/// Per-tap gradients produced by a fusion block's backward, at the taps'
/// native resolutions. Disabled taps get zero tensors.
pub struct TapGrads<E: Elem = f32> {
    pub dsf4: Tensor<E>,
    pub dsf7: Tensor<E>,
    pub dsf9: Tensor<E>,
}

impl<E: Elem> TapGrads<E> {
    /// Elementwise sum with another set of tap gradients.
    pub fn add_assign(&mut self, other: &TapGrads<E>) {
        self.dsf4.add_assign(&other.dsf4);
        self.dsf7.add_assign(&other.dsf7);
        self.dsf9.add_assign(&other.dsf9);
    }
}

impl<E: Elem> Laterals<E> {
    fn new(rng: &mut Lcg64, cfg: &FusionCfg, tap_channels: (usize, usize, usize)) -> Self {
        let mk = |rng: &mut Lcg64, on: bool, c_in: usize| {
            on.then(|| Lateral::new(rng, cfg.lateral_width, c_in))
        };
        Laterals {
            dsf4: mk(rng, cfg.taps.dsf4, tap_channels.0),
            dsf7: mk(rng, cfg.taps.dsf7, tap_channels.1),
            dsf9: mk(rng, cfg.taps.dsf9, tap_channels.2),
        }
    }

    fn forward_infer(&self, feats: &Features<E>) -> Result<Tensor<E>> {
        let (pooled4, _) = align_dsf4(feats)?;
        let mut parts = Vec::new();
        if let Some(l) = &self.dsf4 {
            parts.push(l.forward_infer(&pooled4)?);
        }
        if let Some(l) = &self.dsf7 {
            parts.push(l.forward_infer(&feats.dsf7)?);
        }
        if let Some(l) = &self.dsf9 {
            parts.push(l.forward_infer(&feats.dsf9)?);
        }
        ops::concat_channels(&parts.iter().collect::<Vec<_>>())
    }

    fn forward_train(&mut self, feats: &Features<E>) -> Result<(Tensor<E>, LateralsTrace<E>)> {
        let (pooled4, argmax4) = align_dsf4(feats)?;
        let mut parts = Vec::new();
        let mut lateral_width = 0;
        let mut t4 = None;
        let mut t7 = None;
        let mut t9 = None;
        if let Some(l) = &mut self.dsf4 {
            let (y, t) = l.forward_train(&pooled4)?;
            lateral_width = y.shape[1];
            parts.push(y);
            t4 = Some(t);
        }
        if let Some(l) = &mut self.dsf7 {
            let (y, t) = l.forward_train(&feats.dsf7)?;
            lateral_width = y.shape[1];
            parts.push(y);
            t7 = Some(t);
        }
        if let Some(l) = &mut self.dsf9 {
            let (y, t) = l.forward_train(&feats.dsf9)?;
            lateral_width = y.shape[1];
            parts.push(y);
            t9 = Some(t);
        }
        let cat = ops::concat_channels(&parts.iter().collect::<Vec<_>>())?;
        Ok((
            cat,
            LateralsTrace {
                dsf4_pool: self.dsf4.is_some().then(|| (argmax4, feats.dsf4.shape.clone())),
                dsf4: t4,
                dsf7: t7,
                dsf9: t9,
                lateral_width,
            },
        ))
    }

    fn backward(
        &self,
        prefix: &str,
        trace: &LateralsTrace<E>,
        grad_concat: &Tensor<E>,
        feats: &Features<E>,
        grads: &mut Grads<E>,
    ) -> Result<TapGrads<E>> {
        let widths = vec![trace.lateral_width; grad_concat.shape[1] / trace.lateral_width];
        let mut pieces = ops::split_channels(grad_concat, &widths)?.into_iter();

        let mut out = TapGrads {
            dsf4: Tensor::zeros(&feats.dsf4.shape),
            dsf7: Tensor::zeros(&feats.dsf7.shape),
            dsf9: Tensor::zeros(&feats.dsf9.shape),
        };
        if let (Some(l), Some(t)) = (&self.dsf4, &trace.dsf4) {
            let g = l.backward(&format!("{prefix}.dsf4"), t, &pieces.next().unwrap(), grads)?;
            let (argmax, in_shape) = trace.dsf4_pool.as_ref().unwrap();
            out.dsf4 = ops::maxpool2d_backward(in_shape, argmax, &g);
        }
        if let (Some(l), Some(t)) = (&self.dsf7, &trace.dsf7) {
            out.dsf7 = l.backward(&format!("{prefix}.dsf7"), t, &pieces.next().unwrap(), grads)?;
        }
        if let (Some(l), Some(t)) = (&self.dsf9, &trace.dsf9) {
            out.dsf9 = l.backward(&format!("{prefix}.dsf9"), t, &pieces.next().unwrap(), grads)?;
        }
        Ok(out)
    }

    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<E>)>) {
        if let Some(l) = &self.dsf4 {
            l.collect(&format!("{prefix}.dsf4"), out);
        }
        if let Some(l) = &self.dsf7 {
            l.collect(&format!("{prefix}.dsf7"), out);
        }
        if let Some(l) = &self.dsf9 {
            l.collect(&format!("{prefix}.dsf9"), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<E>)>) {
        if let Some(l) = &mut self.dsf4 {
            l.collect_mut(&format!("{prefix}.dsf4"), out);
        }
        if let Some(l) = &mut self.dsf7 {
            l.collect_mut(&format!("{prefix}.dsf7"), out);
        }
        if let Some(l) = &mut self.dsf9 {
            l.collect_mut(&format!("{prefix}.dsf9"), out);
        }
    }

    fn collect_trainable_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Tensor<E>)>,
    ) {
        if let Some(l) = &mut self.dsf4 {
            l.collect_trainable_mut(&format!("{prefix}.dsf4"), out);
        }
        if let Some(l) = &mut self.dsf7 {
            l.collect_trainable_mut(&format!("{prefix}.dsf7"), out);
        }
        if let Some(l) = &mut self.dsf9 {
            l.collect_trainable_mut(&format!("{prefix}.dsf9"), out);
        }
    }
}

// ---------------------------------------------------------------------------
// First fusion block: laterals -> concat -> 3x3 conv -> ReLU
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Mff1<E: Elem = f32> {
    laterals: Laterals<E>,
    fuse_weight: Tensor<E>, // (out, concat, 3, 3)
    fuse_bias: Tensor<E>,
}

pub struct Mff1Trace<E: Elem> {
    laterals: LateralsTrace<E>,
    concat: Tensor<E>,
    pre_relu: Tensor<E>,
}

impl<E: Elem> Mff1<E> {
    pub fn new(
        rng: &mut Lcg64,
        cfg: &FusionCfg,
        tap_channels: (usize, usize, usize),
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Mff1 {
            laterals: Laterals::new(rng, cfg, tap_channels),
            fuse_weight: gaussian_tensor(rng, &[cfg.mff1_out, cfg.concat_width(), 3, 3], WEIGHT_INIT_STD),
            fuse_bias: Tensor::zeros(&[cfg.mff1_out]),
        })
    }

    pub fn forward_infer(&self, feats: &Features<E>) -> Result<Tensor<E>> {
        let cat = self.laterals.forward_infer(feats)?;
        let y = ops::conv2d(&cat, &self.fuse_weight, Some(&self.fuse_bias), 1, 1)?;
        Ok(ops::relu(&y))
    }

    pub fn forward_train(&mut self, feats: &Features<E>) -> Result<(Tensor<E>, Mff1Trace<E>)> {
        let (cat, laterals) = self.laterals.forward_train(feats)?;
        let pre_relu = ops::conv2d(&cat, &self.fuse_weight, Some(&self.fuse_bias), 1, 1)?;
        let out = ops::relu(&pre_relu);
        Ok((
            out,
            Mff1Trace {
                laterals,
                concat: cat,
                pre_relu,
            },
        ))
    }

    /// Backward from the fused-map gradient to per-tap gradients,
    /// accumulating parameter gradients under `mff1.*`.
    pub fn backward(
        &self,
        trace: &Mff1Trace<E>,
        grad_out: &Tensor<E>,
        feats: &Features<E>,
        grads: &mut Grads<E>,
    ) -> Result<TapGrads<E>> {
        let g = ops::relu_backward(&trace.pre_relu, grad_out);
        let conv_grads = ops::conv2d_backward(&trace.concat, &self.fuse_weight, &g, 1, 1)?;
        grads.add("mff1.fuse.weight", conv_grads.weight);
        grads.add("mff1.fuse.bias", conv_grads.bias);
        self.laterals
            .backward("mff1.lateral", &trace.laterals, &conv_grads.input, feats, grads)
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<(String, &'a Tensor<E>)>) {
        self.laterals.collect("mff1.lateral", out);
        out.push(("mff1.fuse.weight".into(), &self.fuse_weight));
        out.push(("mff1.fuse.bias".into(), &self.fuse_bias));
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Tensor<E>)>) {
        self.laterals.collect_mut("mff1.lateral", out);
        out.push(("mff1.fuse.weight".into(), &mut self.fuse_weight));
        out.push(("mff1.fuse.bias".into(), &mut self.fuse_bias));
    }

    pub fn collect_trainable_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Tensor<E>)>) {
        self.laterals.collect_trainable_mut("mff1.lateral", out);
        out.push(("mff1.fuse.weight".into(), &mut self.fuse_weight));
        out.push(("mff1.fuse.bias".into(), &mut self.fuse_bias));
    }
}

// ---------------------------------------------------------------------------
// Second fusion block: laterals -> concat -> 1x1 encode -> 1x1 reduce -> ReLU
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Mff2<E: Elem = f32> {
    laterals: Laterals<E>,
    encode_weight: Tensor<E>, // (mid, concat, 1, 1)
    encode_bias: Tensor<E>,
    reduce_weight: Tensor<E>, // (out, mid, 1, 1)
    reduce_bias: Tensor<E>,
}

pub struct Mff2Trace<E: Elem> {
    laterals: LateralsTrace<E>,
    concat: Tensor<E>,
    encoded: Tensor<E>,
    pre_relu: Tensor<E>,
}

impl<E: Elem> Mff2<E> {
    pub fn new(
        rng: &mut Lcg64,
        cfg: &FusionCfg,
        tap_channels: (usize, usize, usize),
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Mff2 {
            laterals: Laterals::new(rng, cfg, tap_channels),
            encode_weight: gaussian_tensor(
                rng,
                &[cfg.mff2_mid, cfg.concat_width(), 1, 1],
                WEIGHT_INIT_STD,
            ),
            encode_bias: Tensor::zeros(&[cfg.mff2_mid]),
            reduce_weight: gaussian_tensor(rng, &[cfg.mff2_out, cfg.mff2_mid, 1, 1], WEIGHT_INIT_STD),
            reduce_bias: Tensor::zeros(&[cfg.mff2_out]),
        })
    }

    pub fn forward_infer(&self, feats: &Features<E>) -> Result<Tensor<E>> {
        let cat = self.laterals.forward_infer(feats)?;
        let mid = ops::conv2d(&cat, &self.encode_weight, Some(&self.encode_bias), 1, 0)?;
        let y = ops::conv2d(&mid, &self.reduce_weight, Some(&self.reduce_bias), 1, 0)?;
        Ok(ops::relu(&y))
    }

    pub fn forward_train(&mut self, feats: &Features<E>) -> Result<(Tensor<E>, Mff2Trace<E>)> {
        let (cat, laterals) = self.laterals.forward_train(feats)?;
        let encoded = ops::conv2d(&cat, &self.encode_weight, Some(&self.encode_bias), 1, 0)?;
        let pre_relu = ops::conv2d(&encoded, &self.reduce_weight, Some(&self.reduce_bias), 1, 0)?;
        let out = ops::relu(&pre_relu);
        Ok((
            out,
            Mff2Trace {
                laterals,
                concat: cat,
                encoded,
                pre_relu,
            },
        ))
    }

    /// Backward from the head-map gradient to per-tap gradients,
    /// accumulating parameter gradients under `mff2.*`.
    pub fn backward(
        &self,
        trace: &Mff2Trace<E>,
        grad_out: &Tensor<E>,
        feats: &Features<E>,
        grads: &mut Grads<E>,
    ) -> Result<TapGrads<E>> {
        let g = ops::relu_backward(&trace.pre_relu, grad_out);
        let reduce_grads = ops::conv2d_backward(&trace.encoded, &self.reduce_weight, &g, 1, 0)?;
        grads.add("mff2.reduce.weight", reduce_grads.weight);
        grads.add("mff2.reduce.bias", reduce_grads.bias);
        let encode_grads =
            ops::conv2d_backward(&trace.concat, &self.encode_weight, &reduce_grads.input, 1, 0)?;
        grads.add("mff2.encode.weight", encode_grads.weight);
        grads.add("mff2.encode.bias", encode_grads.bias);
        self.laterals
            .backward("mff2.lateral", &trace.laterals, &encode_grads.input, feats, grads)
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<(String, &'a Tensor<E>)>) {
        self.laterals.collect("mff2.lateral", out);
        out.push(("mff2.encode.weight".into(), &self.encode_weight));
        out.push(("mff2.encode.bias".into(), &self.encode_bias));
        out.push(("mff2.reduce.weight".into(), &self.reduce_weight));
        out.push(("mff2.reduce.bias".into(), &self.reduce_bias));
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Tensor<E>)>) {
        self.laterals.collect_mut("mff2.lateral", out);
        out.push(("mff2.encode.weight".into(), &mut self.encode_weight));
        out.push(("mff2.encode.bias".into(), &mut self.encode_bias));
        out.push(("mff2.reduce.weight".into(), &mut self.reduce_weight));
        out.push(("mff2.reduce.bias".into(), &mut self.reduce_bias));
    }

    pub fn collect_trainable_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Tensor<E>)>) {
        self.laterals.collect_trainable_mut("mff2.lateral", out);
        out.push(("mff2.encode.weight".into(), &mut self.encode_weight));
        out.push(("mff2.encode.bias".into(), &mut self.encode_bias));
        out.push(("mff2.reduce.weight".into(), &mut self.reduce_weight));
        out.push(("mff2.reduce.bias".into(), &mut self.reduce_bias));
    }
}

// ---------------------------------------------------------------------------
// Concatenation diagnostic
// ---------------------------------------------------------------------------

/// Channel mean of the raw aligned tap concatenation (no laterals), for
/// visual inspection of what the fusion blocks actually see.
pub fn dump_concat_map<E: Elem>(feats: &Features<E>, taps: TapSet) -> Result<Tensor<E>> {
    taps.validate()?;
    let (pooled4, _) = align_dsf4(feats)?;
    let mut parts: Vec<&Tensor<E>> = Vec::new();
    if taps.dsf4 {
        parts.push(&pooled4);
    }
    if taps.dsf7 {
        parts.push(&feats.dsf7);
    }
    if taps.dsf9 {
        parts.push(&feats.dsf9);
    }
    let cat = ops::concat_channels(&parts)?;
    crate::backbone::channel_mean_map(&cat)
}
