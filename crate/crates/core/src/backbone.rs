//! Depthwise-separable convolutional backbone.
//!
//! The stack is a single 3x3/stride-2 stem followed by eight
//! "squeeze + depthwise + pointwise" modules (DSF modules) with three
//! interleaved 3x3/stride-2 ceil-mode max pools:
//!
//! ```text
//! conv1 s2 -> mp1 -> dsf2 dsf3 -> mp3 -> dsf4 dsf5 -> mp5 -> dsf6..dsf9
//! ```
//!
//! Every convolution is bias-free and followed by batch normalization and
//! ReLU. A 224x224 input shrinks 112 -> 56 -> 28 -> 14 across the pool
//! stages. In detection mode the backbone exposes three taps:
//! `dsf4` (stride 8) plus `dsf7` and `dsf9` (stride 16). In classifier
//! mode a biased 1x1 convolution, global average pooling and a softmax
//! sit on top of `dsf9`.
//!
//! The element type is generic so tests can rebuild the same network in
//! `f64` for tight finite-difference comparisons; the pipeline runs `f32`.

use crate::error::{Error, Result};
use crate::ops;
use crate::params::{gaussian_tensor, Grads, WEIGHT_INIT_STD};
use crate::rng::Lcg64;
use crate::tensor::{Elem, Tensor};

/// Channel widths of one DSF module. The input width is implied by the
/// previous layer; `squeeze` is the 1x1 entry width (which is also the
/// depthwise width) and `out` the 1x1 exit width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DsfWidths {
    pub squeeze: usize,
    pub out: usize,
}

/// Backbone configuration: stem width, the eight DSF widths, and an
/// optional classifier head. `table()` is the full-size network;
/// `toy(divisor)` scales every width down for desk-scale training runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackboneCfg {
    pub conv1_out: usize,
    pub dsf: [DsfWidths; 8],
    /// `Some(classes)` adds the biased 1x1 classifier convolution.
    pub classifier_classes: Option<usize>,
}

impl BackboneCfg {
    /// Full-size widths: 64 through the first two modules, then doubling
    /// at modules 4, 6 and 8 up to 512, with a 1000-class head.
    pub fn table() -> Self {
        let w = |squeeze, out| DsfWidths { squeeze, out };
        BackboneCfg {
            conv1_out: 64,
            dsf: [
                w(64, 64),   // dsf2
                w(64, 64),   // dsf3
                w(128, 128), // dsf4
                w(128, 128), // dsf5
                w(256, 256), // dsf6
                w(256, 256), // dsf7
                w(512, 512), // dsf8
                w(512, 512), // dsf9
            ],
            classifier_classes: Some(1000),
        }
    }

    /// Full-size widths divided by `divisor`, classifier head removed.
    /// Keeps the 1:1:2:2:4:4:8:8 progression so detection taps stay
    /// proportionate.
    pub fn toy(divisor: usize) -> Self {
        let mut cfg = Self::table();
        cfg.conv1_out /= divisor;
        for w in cfg.dsf.iter_mut() {
            w.squeeze /= divisor;
            w.out /= divisor;
        }
        cfg.classifier_classes = None;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv1_out == 0 {
            return Err(Error::config("conv1 width must be positive"));
        }
        for (i, w) in self.dsf.iter().enumerate() {
            if w.squeeze == 0 || w.out == 0 {
                return Err(Error::config(format!(
                    "dsf{} widths must be positive, got {:?}",
                    i + 2,
                    w
                )));
            }
        }
        if self.classifier_classes == Some(0) {
            return Err(Error::config("classifier must have at least one class"));
        }
        Ok(())
    }

    /// Input width of DSF module `idx` (0 = dsf2).
    fn dsf_in(&self, idx: usize) -> usize {
        if idx == 0 {
            self.conv1_out
        } else {
            self.dsf[idx - 1].out
        }
    }

    /// Channel widths of the three detection taps `(dsf4, dsf7, dsf9)`.
    pub fn tap_channels(&self) -> (usize, usize, usize) {
        (self.dsf[2].out, self.dsf[5].out, self.dsf[7].out)
    }
}

/// Spatial strides of the detection taps relative to the input image.
pub const TAP_STRIDES: (usize, usize, usize) = (8, 16, 16);

// ---------------------------------------------------------------------------
// Layer building blocks
// ---------------------------------------------------------------------------

/// Bias-free convolution + batch norm + ReLU.
#[derive(Debug, Clone)]
pub struct ConvBn<E: Elem = f32> {
    pub weight: Tensor<E>, // (Q, P, K, K)
    pub bn: ops::BnParams<E>,
    pub stride: usize,
    pub pad: usize,
}

/// Forward-pass cache of one [`ConvBn`], consumed by its backward.
pub struct ConvBnTrace<E: Elem> {
    input: Tensor<E>,
    bn: ops::BnCache<E>,
    pre_relu: Tensor<E>,
}

impl<E: Elem> ConvBn<E> {
    fn new(rng: &mut Lcg64, q: usize, p: usize, k: usize, stride: usize, pad: usize) -> Self {
        ConvBn {
            weight: gaussian_tensor(rng, &[q, p, k, k], WEIGHT_INIT_STD),
            bn: ops::BnParams::identity(q),
            stride,
            pad,
        }
    }

    fn forward_infer(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let y = ops::conv2d(x, &self.weight, None, self.stride, self.pad)?;
        Ok(ops::relu(&ops::batchnorm_infer(&y, &self.bn)?))
    }

    fn forward_train(&mut self, x: &Tensor<E>) -> Result<(Tensor<E>, ConvBnTrace<E>)> {
        let y = ops::conv2d(x, &self.weight, None, self.stride, self.pad)?;
        let (pre_relu, bn) = ops::batchnorm_train(&y, &mut self.bn)?;
        let out = ops::relu(&pre_relu);
        Ok((
            out,
            ConvBnTrace {
                input: x.clone(),
                bn,
                pre_relu,
            },
        ))
    }

    /// Accumulates parameter gradients under `prefix` and returns the
    /// gradient with respect to the layer input.
    fn backward(
        &self,
        prefix: &str,
        trace: &ConvBnTrace<E>,
        grad_out: &Tensor<E>,
        grads: &mut Grads<E>,
    ) -> Result<Tensor<E>> {
        let g = ops::relu_backward(&trace.pre_relu, grad_out);
        let (g_conv, g_gamma, g_beta) = ops::batchnorm_backward(&g, &trace.bn, &self.bn.gamma);
        let conv_grads =
            ops::conv2d_backward(&trace.input, &self.weight, &g_conv, self.stride, self.pad)?;
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

/// Depthwise 3x3 convolution + batch norm + ReLU.
#[derive(Debug, Clone)]
pub struct DwBn<E: Elem = f32> {
    pub weight: Tensor<E>, // (C, 3, 3)
    pub bn: ops::BnParams<E>,
}

pub struct DwBnTrace<E: Elem> {
    input: Tensor<E>,
    bn: ops::BnCache<E>,
    pre_relu: Tensor<E>,
}

impl<E: Elem> DwBn<E> {
    fn new(rng: &mut Lcg64, c: usize) -> Self {
        DwBn {
            weight: gaussian_tensor(rng, &[c, 3, 3], WEIGHT_INIT_STD),
            bn: ops::BnParams::identity(c),
        }
    }

    fn forward_infer(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let y = ops::depthwise_conv2d(x, &self.weight, 1, 1)?;
        Ok(ops::relu(&ops::batchnorm_infer(&y, &self.bn)?))
    }

    fn forward_train(&mut self, x: &Tensor<E>) -> Result<(Tensor<E>, DwBnTrace<E>)> {
        let y = ops::depthwise_conv2d(x, &self.weight, 1, 1)?;
        let (pre_relu, bn) = ops::batchnorm_train(&y, &mut self.bn)?;
        let out = ops::relu(&pre_relu);
        Ok((
            out,
            DwBnTrace {
                input: x.clone(),
                bn,
                pre_relu,
            },
        ))
    }

    fn backward(
        &self,
        prefix: &str,
        trace: &DwBnTrace<E>,
        grad_out: &Tensor<E>,
        grads: &mut Grads<E>,
    ) -> Result<Tensor<E>> {
        let g = ops::relu_backward(&trace.pre_relu, grad_out);
        let (g_conv, g_gamma, g_beta) = ops::batchnorm_backward(&g, &trace.bn, &self.bn.gamma);
        let dw_grads = ops::depthwise_conv2d_backward(&trace.input, &self.weight, &g_conv, 1, 1)?;
        grads.add(format!("{prefix}.weight"), dw_grads.weight);
        grads.add(format!("{prefix}.gamma"), g_gamma);
        grads.add(format!("{prefix}.beta"), g_beta);
        Ok(dw_grads.input)
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

/// One depthwise-separable module: 1x1 squeeze, 3x3 depthwise, 1x1
/// pointwise, each with batch norm and ReLU, all stride 1.
#[derive(Debug, Clone)]
pub struct DsfModule<E: Elem = f32> {
    pub squeeze: ConvBn<E>,
    pub dw: DwBn<E>,
    pub point: ConvBn<E>,
}

pub struct DsfTrace<E: Elem> {
    squeeze: ConvBnTrace<E>,
    dw: DwBnTrace<E>,
    point: ConvBnTrace<E>,
}

impl<E: Elem> DsfModule<E> {
    fn new(rng: &mut Lcg64, c_in: usize, widths: DsfWidths) -> Self {
        DsfModule {
            squeeze: ConvBn::new(rng, widths.squeeze, c_in, 1, 1, 0),
            dw: DwBn::new(rng, widths.squeeze),
            point: ConvBn::new(rng, widths.out, widths.squeeze, 1, 1, 0),
        }
    }

    fn forward_infer(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        self.point
            .forward_infer(&self.dw.forward_infer(&self.squeeze.forward_infer(x)?)?)
    }

    fn forward_train(&mut self, x: &Tensor<E>) -> Result<(Tensor<E>, DsfTrace<E>)> {
        let (s, squeeze) = self.squeeze.forward_train(x)?;
        let (d, dw) = self.dw.forward_train(&s)?;
        let (p, point) = self.point.forward_train(&d)?;
        Ok((p, DsfTrace { squeeze, dw, point }))
    }

    fn backward(
        &self,
        prefix: &str,
        trace: &DsfTrace<E>,
        grad_out: &Tensor<E>,
        grads: &mut Grads<E>,
    ) -> Result<Tensor<E>> {
        let g = self
            .point
            .backward(&format!("{prefix}.point"), &trace.point, grad_out, grads)?;
        let g = self.dw.backward(&format!("{prefix}.dw"), &trace.dw, &g, grads)?;
        self.squeeze
            .backward(&format!("{prefix}.squeeze"), &trace.squeeze, &g, grads)
    }

    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<E>)>) {
        self.squeeze.collect(&format!("{prefix}.squeeze"), out);
        self.dw.collect(&format!("{prefix}.dw"), out);
        self.point.collect(&format!("{prefix}.point"), out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<E>)>) {
        self.squeeze.collect_mut(&format!("{prefix}.squeeze"), out);
        self.dw.collect_mut(&format!("{prefix}.dw"), out);
        self.point.collect_mut(&format!("{prefix}.point"), out);
    }

    fn collect_trainable_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Tensor<E>)>,
    ) {
        self.squeeze
            .collect_trainable_mut(&format!("{prefix}.squeeze"), out);
        self.dw.collect_trainable_mut(&format!("{prefix}.dw"), out);
        self.point
            .collect_trainable_mut(&format!("{prefix}.point"), out);
    }
}

// ---------------------------------------------------------------------------
// Backbone
// ---------------------------------------------------------------------------

const POOL_WINDOW: usize = 3;
const POOL_STRIDE: usize = 2;

/// The three detection taps of one forward pass.
pub struct Features<E: Elem = f32> {
    /// Stride-8 tap (after dsf4): finest spatial detail.
    pub dsf4: Tensor<E>,
    /// Stride-16 tap (after dsf7).
    pub dsf7: Tensor<E>,
    /// Stride-16 tap (after dsf9): deepest semantics.
    pub dsf9: Tensor<E>,
}

struct PoolTrace {
    argmax: Vec<u32>,
    in_shape: Vec<usize>,
}

/// Forward caches for [`Backbone::backward_features`].
pub struct BackboneTrace<E: Elem> {
    conv1: ConvBnTrace<E>,
    mp1: PoolTrace,
    dsf: Vec<DsfTrace<E>>,
    mp3: PoolTrace,
    mp5: PoolTrace,
}

#[derive(Debug, Clone)]
pub struct Backbone<E: Elem = f32> {
    pub cfg: BackboneCfg,
    pub conv1: ConvBn<E>,
    pub dsf: Vec<DsfModule<E>>, // dsf2..dsf9
    /// Classifier head: biased 1x1 convolution (present in classifier
    /// configurations only).
    pub conv10: Option<(Tensor<E>, Tensor<E>)>, // (weight (Q,P,1,1), bias (Q))
}

impl<E: Elem> Backbone<E> {
    pub fn new(cfg: BackboneCfg, rng: &mut Lcg64) -> Result<Self> {
        cfg.validate()?;
        let conv1 = ConvBn::new(rng, cfg.conv1_out, 3, 3, 2, 1);
        let mut dsf = Vec::with_capacity(8);
        for i in 0..8 {
            dsf.push(DsfModule::new(rng, cfg.dsf_in(i), cfg.dsf[i]));
        }
        let conv10 = cfg.classifier_classes.map(|classes| {
            (
                gaussian_tensor(rng, &[classes, cfg.dsf[7].out, 1, 1], WEIGHT_INIT_STD),
                Tensor::zeros(&[classes]),
            )
        });
        Ok(Backbone {
            cfg,
            conv1,
            dsf,
            conv10,
        })
    }

    fn check_input(&self, image: &Tensor<E>) -> Result<()> {
        let (_, c, h, w) = image.dims4()?;
        if c != 3 {
            return Err(Error::shape(format!("expected 3 input channels, got {c}")));
        }
        if h % 16 != 0 || w % 16 != 0 || h < 32 || w < 32 {
            return Err(Error::shape(format!(
                "input extent must be a multiple of 16 and at least 32, got {h}x{w}"
            )));
        }
        Ok(())
    }

    /// Inference-mode forward to the three detection taps.
    pub fn forward_features(&self, image: &Tensor<E>) -> Result<Features<E>> {
        self.check_input(image)?;
        let x = self.conv1.forward_infer(image)?;
        let (mut x, _) = ops::maxpool2d(&x, POOL_WINDOW, POOL_STRIDE, true)?;
        let mut dsf4 = None;
        let mut dsf7 = None;
        for (i, m) in self.dsf.iter().enumerate() {
            x = m.forward_infer(&x)?;
            match i {
                2 => dsf4 = Some(x.clone()),
                5 => dsf7 = Some(x.clone()),
                _ => {}
            }
            if i == 1 || i == 3 {
                x = ops::maxpool2d(&x, POOL_WINDOW, POOL_STRIDE, true)?.0;
            }
        }
        Ok(Features {
            dsf4: dsf4.unwrap(),
            dsf7: dsf7.unwrap(),
            dsf9: x,
        })
    }

    /// Training-mode forward (batch-norm batch statistics, caches kept).
    pub fn forward_features_train(
        &mut self,
        image: &Tensor<E>,
    ) -> Result<(Features<E>, BackboneTrace<E>)> {
        self.check_input(image)?;
        let (x, conv1) = self.conv1.forward_train(image)?;
        let in_shape = x.shape.clone();
        let (mut x, argmax) = ops::maxpool2d(&x, POOL_WINDOW, POOL_STRIDE, true)?;
        let mp1 = PoolTrace { argmax, in_shape };

        let mut traces = Vec::with_capacity(8);
        let mut dsf4 = None;
        let mut dsf7 = None;
        let mut mp3 = None;
        let mut mp5 = None;
        for i in 0..8 {
            let (y, t) = self.dsf[i].forward_train(&x)?;
            traces.push(t);
            x = y;
            match i {
                2 => dsf4 = Some(x.clone()),
                5 => dsf7 = Some(x.clone()),
                _ => {}
            }
            if i == 1 || i == 3 {
                let in_shape = x.shape.clone();
                let (pooled, argmax) = ops::maxpool2d(&x, POOL_WINDOW, POOL_STRIDE, true)?;
                let trace = PoolTrace { argmax, in_shape };
                if i == 1 {
                    mp3 = Some(trace);
                } else {
                    mp5 = Some(trace);
                }
                x = pooled;
            }
        }
        Ok((
            Features {
                dsf4: dsf4.unwrap(),
                dsf7: dsf7.unwrap(),
                dsf9: x,
            },
            BackboneTrace {
                conv1,
                mp1,
                dsf: traces,
                mp3: mp3.unwrap(),
                mp5: mp5.unwrap(),
            },
        ))
    }

    /// Backward from tap gradients down to the stem, accumulating every
    /// parameter gradient. Tap gradients may come from several consumers;
    /// the caller sums them before calling (one tensor per tap).
    pub fn backward_features(
        &self,
        trace: &BackboneTrace<E>,
        grad_dsf4: &Tensor<E>,
        grad_dsf7: &Tensor<E>,
        grad_dsf9: &Tensor<E>,
        grads: &mut Grads<E>,
    ) -> Result<()> {
        // dsf9 <- dsf8 <- (dsf7 tap join) <- dsf7 <- dsf6 <- mp5
        let g = self.dsf[7].backward("dsf9", &trace.dsf[7], grad_dsf9, grads)?;
        let mut g = self.dsf[6].backward("dsf8", &trace.dsf[6], &g, grads)?;
        g.add_assign(grad_dsf7);
        let g = self.dsf[5].backward("dsf7", &trace.dsf[5], &g, grads)?;
        let g = self.dsf[4].backward("dsf6", &trace.dsf[4], &g, grads)?;
        let g = ops::maxpool2d_backward(&trace.mp5.in_shape, &trace.mp5.argmax, &g);
        // dsf5 <- (dsf4 tap join) <- dsf4 <- mp3
        let mut g = self.dsf[3].backward("dsf5", &trace.dsf[3], &g, grads)?;
        g.add_assign(grad_dsf4);
        let g = self.dsf[2].backward("dsf4", &trace.dsf[2], &g, grads)?;
        let g = ops::maxpool2d_backward(&trace.mp3.in_shape, &trace.mp3.argmax, &g);
        // dsf3 <- dsf2 <- mp1 <- conv1
        let g = self.dsf[1].backward("dsf3", &trace.dsf[1], &g, grads)?;
        let g = self.dsf[0].backward("dsf2", &trace.dsf[0], &g, grads)?;
        let g = ops::maxpool2d_backward(&trace.mp1.in_shape, &trace.mp1.argmax, &g);
        self.conv1.backward("conv1", &trace.conv1, &g, grads)?;
        Ok(())
    }

    /// Full classifier forward: backbone, 1x1 head, global average pool,
    /// softmax. Returns per-image class probabilities `(N, classes)`.
    pub fn forward_classifier(&self, image: &Tensor<E>) -> Result<Tensor<E>> {
        let (weight, bias) = self
            .conv10
            .as_ref()
            .ok_or_else(|| Error::config("backbone has no classifier head"))?;
        let feats = self.forward_features(image)?;
        let logits_map = ops::conv2d(&feats.dsf9, weight, Some(bias), 1, 0)?;
        let pooled = ops::global_avgpool(&logits_map)?;
        Ok(ops::softmax_rows(&pooled))
    }

    // -----------------------------------------------------------------
    // Introspection
    // -----------------------------------------------------------------

    pub fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<E>)>) {
        self.conv1.collect(&format!("{prefix}conv1"), out);
        for (i, m) in self.dsf.iter().enumerate() {
            m.collect(&format!("{prefix}dsf{}", i + 2), out);
        }
        if let Some((w, b)) = &self.conv10 {
            out.push((format!("{prefix}conv10.weight"), w));
            out.push((format!("{prefix}conv10.bias"), b));
        }
    }

    pub fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<E>)>) {
        self.conv1.collect_mut(&format!("{prefix}conv1"), out);
        for (i, m) in self.dsf.iter_mut().enumerate() {
            m.collect_mut(&format!("{prefix}dsf{}", i + 2), out);
        }
        if let Some((w, b)) = &mut self.conv10 {
            out.push((format!("{prefix}conv10.weight"), w));
            out.push((format!("{prefix}conv10.bias"), b));
        }
    }

    pub fn collect_trainable_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Tensor<E>)>,
    ) {
        self.conv1
            .collect_trainable_mut(&format!("{prefix}conv1"), out);
        for (i, m) in self.dsf.iter_mut().enumerate() {
            m.collect_trainable_mut(&format!("{prefix}dsf{}", i + 2), out);
        }
        if let Some((w, b)) = &mut self.conv10 {
            out.push((format!("{prefix}conv10.weight"), w));
            out.push((format!("{prefix}conv10.bias"), b));
        }
    }
}

// ---------------------------------------------------------------------------
// Feature-map snapshots
// ---------------------------------------------------------------------------

/// Stages whose activations can be dumped as channel-mean maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotTap {
    Mp1,
    Mp3,
    Mp5,
    Dsf3,
    Dsf5,
    Dsf7,
    Dsf9,
}

impl SnapshotTap {
    pub const ALL: [SnapshotTap; 7] = [
        SnapshotTap::Mp1,
        SnapshotTap::Mp3,
        SnapshotTap::Mp5,
        SnapshotTap::Dsf3,
        SnapshotTap::Dsf5,
        SnapshotTap::Dsf7,
        SnapshotTap::Dsf9,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "mp1" => SnapshotTap::Mp1,
            "mp3" => SnapshotTap::Mp3,
            "mp5" => SnapshotTap::Mp5,
            "dsf3" => SnapshotTap::Dsf3,
            "dsf5" => SnapshotTap::Dsf5,
            "dsf7" => SnapshotTap::Dsf7,
            "dsf9" => SnapshotTap::Dsf9,
            other => {
                return Err(Error::config(format!(
                    "unknown tap '{other}' (expected one of mp1, mp3, mp5, dsf3, dsf5, dsf7, dsf9)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SnapshotTap::Mp1 => "mp1",
            SnapshotTap::Mp3 => "mp3",
            SnapshotTap::Mp5 => "mp5",
            SnapshotTap::Dsf3 => "dsf3",
            SnapshotTap::Dsf5 => "dsf5",
            SnapshotTap::Dsf7 => "dsf7",
            SnapshotTap::Dsf9 => "dsf9",
        }
    }
}

/// Mean over channels of a `(1, C, H, W)` activation: a single `(H, W)` map.
pub fn channel_mean_map<E: Elem>(activation: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c, h, w) = activation.dims4()?;
    if n != 1 {
        return Err(Error::shape("channel_mean_map expects a single image"));
    }
    let mut map = Tensor::zeros(&[h, w]);
    let inv = E::from_f64(1.0 / c as f64);
    for ci in 0..c {
        for y in 0..h {
            let row = activation.row4(0, ci, y);
            let dst = &mut map.data[y * w..(y + 1) * w];
            for (d, v) in dst.iter_mut().zip(row) {
                *d += *v * inv;
            }
        }
    }
    Ok(map)
}

/// Min-max normalizes a rank-2 map to 8-bit gray. A constant map comes
/// back all zero rather than dividing by zero.
pub fn to_gray_bytes<E: Elem>(map: &Tensor<E>) -> Vec<u8> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in &map.data {
        let v = v.to_f64();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return vec![0u8; map.data.len()];
    }
    let scale = 255.0 / (hi - lo);
    map.data
        .iter()
        .map(|v| ((v.to_f64() - lo) * scale).round().clamp(0.0, 255.0) as u8)
        .collect()
}

impl<E: Elem> Backbone<E> {
    /// Inference forward that records the requested stage activations as
    /// channel-mean maps, in input order of `taps`.
    pub fn feature_snapshots(
        &self,
        image: &Tensor<E>,
        taps: &[SnapshotTap],
    ) -> Result<Vec<(SnapshotTap, Tensor<E>)>> {
        self.check_input(image)?;
        let mut wanted: Vec<Option<Tensor<E>>> = vec![None; SnapshotTap::ALL.len()];
        let slot = |t: SnapshotTap| SnapshotTap::ALL.iter().position(|&x| x == t).unwrap();

        let x = self.conv1.forward_infer(image)?;
        let (mut x, _) = ops::maxpool2d(&x, POOL_WINDOW, POOL_STRIDE, true)?;
        wanted[slot(SnapshotTap::Mp1)] = Some(x.clone());
        for (i, m) in self.dsf.iter().enumerate() {
            x = m.forward_infer(&x)?;
            match i {
                1 => wanted[slot(SnapshotTap::Dsf3)] = Some(x.clone()),
                3 => wanted[slot(SnapshotTap::Dsf5)] = Some(x.clone()),
                5 => wanted[slot(SnapshotTap::Dsf7)] = Some(x.clone()),
                7 => wanted[slot(SnapshotTap::Dsf9)] = Some(x.clone()),
                _ => {}
            }
            if i == 1 || i == 3 {
                x = ops::maxpool2d(&x, POOL_WINDOW, POOL_STRIDE, true)?.0;
                let tap = if i == 1 { SnapshotTap::Mp3 } else { SnapshotTap::Mp5 };
                wanted[slot(tap)] = Some(x.clone());
            }
        }

        let mut out = Vec::with_capacity(taps.len());
        for &t in taps {
            let act = wanted[slot(t)].as_ref().expect("all stages recorded");
            out.push((t, channel_mean_map(act)?));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_widths_keep_proportions() {
        let cfg = BackboneCfg::toy(8);
        assert_eq!(cfg.conv1_out, 8);
        assert_eq!(cfg.dsf[0], DsfWidths { squeeze: 8, out: 8 });
        assert_eq!(cfg.dsf[7], DsfWidths { squeeze: 64, out: 64 });
        assert_eq!(cfg.tap_channels(), (16, 32, 64));
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn zero_width_is_rejected() {
        let mut cfg = BackboneCfg::toy(4);
        cfg.dsf[3].squeeze = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn input_not_multiple_of_16_is_rejected() {
        let mut rng = Lcg64::new(1);
        let net: Backbone = Backbone::new(BackboneCfg::toy(16), &mut rng).unwrap();
        let image = Tensor::zeros(&[1, 3, 100, 96]);
        assert!(net.forward_features(&image).is_err());
        let image = Tensor::zeros(&[1, 3, 16, 16]);
        assert!(net.forward_features(&image).is_err());
    }

    #[test]
    fn tap_shapes_follow_strides() {
        let mut rng = Lcg64::new(2);
        let cfg = BackboneCfg::toy(16);
        let net: Backbone = Backbone::new(cfg.clone(), &mut rng).unwrap();
        let image = Tensor::zeros(&[1, 3, 64, 96]);
        let feats = net.forward_features(&image).unwrap();
        let (c4, c7, c9) = cfg.tap_channels();
        assert_eq!(feats.dsf4.shape, vec![1, c4, 8, 12]); // stride 8
        assert_eq!(feats.dsf7.shape, vec![1, c7, 4, 6]); // stride 16
        assert_eq!(feats.dsf9.shape, vec![1, c9, 4, 6]);
    }

    #[test]
    fn same_seed_builds_identical_networks() {
        let mut a_rng = Lcg64::new(77);
        let mut b_rng = Lcg64::new(77);
        let a: Backbone = Backbone::new(BackboneCfg::toy(8), &mut a_rng).unwrap();
        let b: Backbone = Backbone::new(BackboneCfg::toy(8), &mut b_rng).unwrap();
        let mut pa = Vec::new();
        let mut pb = Vec::new();
        a.collect("", &mut pa);
        b.collect("", &mut pb);
        assert_eq!(pa.len(), pb.len());
        for ((na, ta), (nb, tb)) in pa.iter().zip(pb.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta, tb, "parameter {na} differs");
        }
    }

    #[test]
    fn parameter_names_are_unique() {
        let mut rng = Lcg64::new(3);
        let mut cfg = BackboneCfg::toy(16);
        cfg.classifier_classes = Some(10);
        let net: Backbone = Backbone::new(cfg, &mut rng).unwrap();
        let mut params = Vec::new();
        net.collect("", &mut params);
        let mut names: Vec<&String> = params.iter().map(|(n, _)| n).collect();
        let before = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), before);
        // conv1 + 8 modules x 3 layers each carry 5 entries; conv10 adds 2.
        assert_eq!(before, 5 * (1 + 24) + 2);
    }

    #[test]
    fn full_size_parameter_counts_match_hand_tally() {
        let mut rng = Lcg64::new(1);
        let net: Backbone = Backbone::new(BackboneCfg::table(), &mut rng).unwrap();
        let mut params = Vec::new();
        net.collect("", &mut params);
        let sum_by = |suffix: &str| -> usize {
            params
                .iter()
                .filter(|(n, _)| n.ends_with(suffix))
                .map(|(_, t)| t.numel())
                .sum()
        };
        // Convolution kernels, stem through classifier, tallied by hand
        // from the width table.
        assert_eq!(sum_by(".weight"), 1_751_616);
        // 5,824 normalized channels contribute gamma+beta and the two
        // running statistics; the classifier is the only biased layer.
        assert_eq!(sum_by(".gamma") + sum_by(".beta"), 11_648);
        assert_eq!(sum_by(".running_mean") + sum_by(".running_var"), 11_648);
        assert_eq!(sum_by(".bias"), 1_000);
        let total: usize = params.iter().map(|(_, t)| t.numel()).sum();
        assert_eq!(total, 1_775_912);
    }

    #[test]
    fn classifier_probabilities_sum_to_one() {
        let mut rng = Lcg64::new(4);
        let mut cfg = BackboneCfg::toy(16);
        cfg.classifier_classes = Some(50);
        let net: Backbone = Backbone::new(cfg, &mut rng).unwrap();
        let image = Tensor::from_fn(&[1, 3, 32, 32], |i| (i % 97) as f32 / 97.0);
        let probs = net.forward_classifier(&image).unwrap();
        assert_eq!(probs.shape, vec![1, 50]);
        let sum: f32 = probs.data.iter().sum();
        assert!((sum - 1.0).abs() < 1e-5);
    }

    #[test]
    fn permuting_classifier_filters_permutes_probabilities() {
        let mut rng = Lcg64::new(5);
        let mut cfg = BackboneCfg::toy(16);
        cfg.classifier_classes = Some(6);
        let mut net: Backbone = Backbone::new(cfg, &mut rng).unwrap();
        // Give the head distinguishable outputs.
        if let Some((w, b)) = &mut net.conv10 {
            *w = gaussian_tensor(&mut rng, &w.shape.clone(), 0.5);
            *b = Tensor::from_fn(&[6], |i| i as f32 * 0.1);
        }
        let image = Tensor::from_fn(&[1, 3, 32, 32], |i| ((i * 31) % 101) as f32 / 101.0);
        let base = net.forward_classifier(&image).unwrap();

        // Swap classifier filters 1 and 4 (weights and biases together).
        if let Some((w, b)) = &mut net.conv10 {
            let p = w.shape[1];
            for ci in 0..p {
                let i1 = w.offset4(1, ci, 0, 0);
                let i4 = w.offset4(4, ci, 0, 0);
                w.data.swap(i1, i4);
            }
            b.data.swap(1, 4);
        }
        let swapped = net.forward_classifier(&image).unwrap();
        assert!((base.data[1] - swapped.data[4]).abs() < 1e-6);
        assert!((base.data[4] - swapped.data[1]).abs() < 1e-6);
        assert!((base.data[0] - swapped.data[0]).abs() < 1e-6);
    }

    #[test]
    fn untrained_classifier_entropy_is_near_uniform() {
        // With symmetric small-weight initialization the logits are nearly
        // equal, so the softmax entropy should sit within 10% of ln(C).
        for seed in 0..10u64 {
            let mut rng = Lcg64::new(seed);
            let mut cfg = BackboneCfg::toy(16);
            cfg.classifier_classes = Some(40);
            let net: Backbone = Backbone::new(cfg, &mut rng).unwrap();
            let image = Tensor::from_fn(&[1, 3, 32, 32], |i| {
                (((i as u64).wrapping_mul(2654435761) >> 8) % 256) as f32 / 255.0
            });
            let probs = net.forward_classifier(&image).unwrap();
            let entropy: f32 = -probs
                .data
                .iter()
                .filter(|p| **p > 0.0)
                .map(|p| p * p.ln())
                .sum::<f32>();
            let target = (40.0f32).ln();
            assert!(
                (entropy - target).abs() / target < 0.10,
                "seed {seed}: entropy {entropy} vs ln(40) = {target}"
            );
        }
    }

    #[test]
    fn snapshot_maps_have_stage_resolutions() {
        let mut rng = Lcg64::new(6);
        let net: Backbone = Backbone::new(BackboneCfg::toy(16), &mut rng).unwrap();
        let image = Tensor::from_fn(&[1, 3, 64, 64], |i| (i % 7) as f32 / 7.0);
        let snaps = net
            .feature_snapshots(&image, &[SnapshotTap::Mp1, SnapshotTap::Mp5, SnapshotTap::Dsf9])
            .unwrap();
        assert_eq!(snaps[0].1.shape, vec![16, 16]);
        assert_eq!(snaps[1].1.shape, vec![4, 4]);
        assert_eq!(snaps[2].1.shape, vec![4, 4]);
    }

    #[test]
    fn gray_bytes_handle_constant_maps() {
        let flat = Tensor::filled(&[2, 2], 3.5f32);
        assert_eq!(to_gray_bytes(&flat), vec![0, 0, 0, 0]);
        let ramp = Tensor::from_vec(&[1, 3], vec![0.0f32, 0.5, 1.0]);
        assert_eq!(to_gray_bytes(&ramp), vec![0, 128, 255]);
    }

    #[test]
    fn f64_twin_matches_f32_network_closely() {
        let mut rng32 = Lcg64::new(12);
        let mut rng64 = Lcg64::new(12);
        let net32: Backbone<f32> = Backbone::new(BackboneCfg::toy(16), &mut rng32).unwrap();
        let net64: Backbone<f64> = Backbone::new(BackboneCfg::toy(16), &mut rng64).unwrap();
        let image32 = Tensor::from_fn(&[1, 3, 32, 32], |i| ((i * 13) % 64) as f32 / 64.0);
        let image64 = image32.cast::<f64>();
        let f32out = net32.forward_features(&image32).unwrap();
        let f64out = net64.forward_features(&image64).unwrap();
        let diff = f32out.dsf9.cast::<f64>().max_abs_diff(&f64out.dsf9).unwrap();
        assert!(diff < 1e-3, "f32/f64 divergence {diff}");
    }
}
