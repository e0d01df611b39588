//! End-to-end SGD training for the detector: step-decayed learning rate,
//! momentum with selective weight decay, the two-stage minibatch sampling
//! (anchors for the proposal heads, labeled boxes for the region head),
//! and a per-iteration loss log.
//!
//! Every random decision flows from one seeded generator, so a run is a
//! pure function of `(detector parameters, dataset, TrainCfg)` — the loss
//! log reproduces bit-for-bit across reruns.

use std::collections::BTreeMap;
use std::path::Path;

use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::mlps::{roi_loss, RoiSample};
use crate::params::{decay_applies, Grads};
use crate::rng::Lcg64;
use crate::rpn::{
    assign_anchor_targets, encode_box, generate_anchors, iou, propose, rpn_loss, BBox, Proposal,
    RpnTargets, ANCHOR_BG_IOU, ANCHOR_FG_IOU, PROPOSAL_NMS_IOU, TRAIN_POST_NMS, TRAIN_PRE_NMS,
};
use crate::synth::Annotation;
use crate::tensor::Tensor;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Optimization hyper-parameters.
#[derive(Debug, Clone)]
pub struct TrainCfg {
    pub base_lr: f64,
    /// Learning-rate multiplier applied at every decay boundary.
    pub lr_decay_factor: f64,
    /// Iterations between decay boundaries.
    pub lr_decay_every: usize,
    pub total_iters: usize,
    pub momentum: f64,
    /// L2 decay, applied to convolution kernels only.
    pub weight_decay: f64,
    /// Anchor minibatch size (at most half foreground).
    pub rpn_batch: usize,
    /// Region minibatch size (at most a quarter foreground).
    pub roi_batch: usize,
    /// Weight of both box-regression terms.
    pub lambda: f64,
    /// Overlap at or above which a sampled box trains as its class.
    pub roi_fg_iou: f64,
    /// Overlap below which a sampled box trains as background. Boxes in
    /// the gap between the two thresholds are dropped: at coarse feature
    /// strides a box just under the foreground cutoff pools nearly the
    /// same bins as the object itself, and labeling it background caps
    /// the achievable confidence.
    pub roi_bg_iou: f64,
    pub seed: u64,
}

impl TrainCfg {
    /// Published schedule: 70k iterations, tenfold decay every 40k.
    pub fn paper(seed: u64) -> Self {
        TrainCfg {
            base_lr: 0.001,
            lr_decay_factor: 0.1,
            lr_decay_every: 40_000,
            total_iters: 70_000,
            momentum: 0.9,
            weight_decay: 0.0005,
            rpn_batch: 256,
            roi_batch: 512,
            lambda: 1.0,
            roi_fg_iou: 0.5,
            roi_bg_iou: 0.35,
            seed,
        }
    }

    /// CPU-scale schedule: same optimizer, 2k iterations with a decay at 1k.
    pub fn desk(seed: u64) -> Self {
        TrainCfg {
            total_iters: 2_000,
            lr_decay_every: 1_000,
            roi_batch: 128,
            ..TrainCfg::paper(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::config("base learning rate must be positive"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::config("decay factor must lie in (0, 1]"));
        }
        if self.lr_decay_every == 0 {
            return Err(Error::config("decay interval must be at least one iteration"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if self.weight_decay < 0.0 || self.lambda < 0.0 {
            return Err(Error::config("decay and loss weights must be non-negative"));
        }
        if self.rpn_batch == 0 || self.roi_batch == 0 {
            return Err(Error::config("minibatch sizes must be positive"));
        }
        if !(self.roi_fg_iou > 0.0 && self.roi_fg_iou <= 1.0) {
            return Err(Error::config("foreground overlap threshold must lie in (0, 1]"));
        }
        if !(0.0 <= self.roi_bg_iou && self.roi_bg_iou <= self.roi_fg_iou) {
            return Err(Error::config(
                "background overlap ceiling must lie in [0, foreground threshold]",
            ));
        }
        Ok(())
    }
}

/// Step-decay schedule: the base rate times `factor^floor(iter / every)`.
pub fn learning_rate(cfg: &TrainCfg, iter: usize) -> f64 {
    cfg.base_lr * cfg.lr_decay_factor.powi((iter / cfg.lr_decay_every) as i32)
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Momentum SGD with selective L2 decay:
/// `v <- m*v + g + wd*p` (decay only on kernel weights), `p <- p - lr*v`.
/// Velocities are kept per parameter name and persist across steps.
#[derive(Debug)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: BTreeMap<String, Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: BTreeMap::new(),
        }
    }

    /// Applies one update to every parameter that received a gradient.
    /// Parameters absent from `grads` keep both value and velocity.
    pub fn step(
        &mut self,
        params: &mut [(String, &mut Tensor<f32>)],
        grads: &Grads<f32>,
        lr: f64,
    ) -> Result<()> {
        for (name, param) in params.iter_mut() {
            let Some(grad) = grads.get(name) else { continue };
            if grad.shape != param.shape {
                return Err(Error::shape(format!(
                    "gradient shape {:?} does not match parameter {name} {:?}",
                    grad.shape, param.shape
                )));
            }
            let wd = if decay_applies(name) { self.weight_decay } else { 0.0 };
            let v = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; param.numel()]);
            for ((p, g), v) in param.data.iter_mut().zip(grad.data.iter()).zip(v.iter_mut()) {
                *v = self.momentum * *v + *g as f64 + wd * *p as f64;
                *p = (*p as f64 - lr * *v) as f32;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Minibatch sampling
// ---------------------------------------------------------------------------

/// Draws `k` distinct elements of `pool` by a partial shuffle; order of the
/// draw is part of the deterministic stream.
fn draw_without_replacement(pool: &mut [usize], k: usize, rng: &mut Lcg64) -> Vec<usize> {
    let k = k.min(pool.len());
    for i in 0..k {
        let j = i + rng.below(pool.len() - i);
        pool.swap(i, j);
    }
    pool[..k].to_vec()
}

/// Samples the anchor minibatch: up to half the budget from foreground
/// anchors, the remainder from background. Ignored anchors never appear.
pub fn sample_anchor_batch(targets: &RpnTargets, cap: usize, rng: &mut Lcg64) -> Vec<usize> {
    let mut fg = targets.foreground_indices();
    let mut bg = targets.background_indices();
    let n_fg = fg.len().min(cap / 2);
    let mut out = draw_without_replacement(&mut fg, n_fg, rng);
    let n_bg = bg.len().min(cap - out.len());
    out.extend(draw_without_replacement(&mut bg, n_bg, rng));
    out
}

/// Labels proposals against ground truth and samples the region minibatch:
/// the ground-truth boxes join the candidate pool (so every object trains
/// even before the proposal heads warm up), a box becomes its best-overlap
/// class at `fg_iou` or above and background below `bg_iou`; boxes in the
/// gap are left out. At most a quarter of the budget is foreground.
pub fn sample_roi_batch(
    proposals: &[Proposal],
    gt: &[(BBox, usize)],
    cap: usize,
    fg_iou: f64,
    bg_iou: f64,
    rng: &mut Lcg64,
) -> Result<Vec<RoiSample>> {
    let mut candidates: Vec<BBox> = proposals.iter().map(|p| p.bbox).collect();
    candidates.extend(gt.iter().map(|(b, _)| *b));

    let mut fg: Vec<RoiSample> = Vec::new();
    let mut bg: Vec<RoiSample> = Vec::new();
    for cand in candidates {
        let mut best = 0usize;
        let mut best_iou = 0.0f64;
        for (g, (gt_box, _)) in gt.iter().enumerate() {
            let ov = iou(&cand, gt_box);
            if ov > best_iou {
                best_iou = ov;
                best = g;
            }
        }
        if !gt.is_empty() && best_iou >= fg_iou {
            let (gt_box, class) = &gt[best];
            fg.push(RoiSample {
                bbox: cand,
                label: *class,
                target: encode_box(&cand, gt_box)?,
            });
        } else if best_iou < bg_iou {
            bg.push(RoiSample {
                bbox: cand,
                label: 0,
                target: [0.0; 4],
            });
        }
    }

    let n_fg = fg.len().min(cap / 4);
    let n_bg = bg.len().min(cap - n_fg);
    let mut fg_idx: Vec<usize> = (0..fg.len()).collect();
    let mut bg_idx: Vec<usize> = (0..bg.len()).collect();
    let mut out = Vec::with_capacity(n_fg + n_bg);
    for i in draw_without_replacement(&mut fg_idx, n_fg, rng) {
        out.push(fg[i].clone());
    }
    for i in draw_without_replacement(&mut bg_idx, n_bg, rng) {
        out.push(bg[i].clone());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// One row of the loss log.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    pub iter: usize,
    pub lr: f64,
    pub rpn_cls: f64,
    pub rpn_reg: f64,
    pub roi_cls: f64,
    pub roi_reg: f64,
    pub total: f64,
}

/// Trains in place for `cfg.total_iters` iterations of one image each,
/// returning the loss log. Aborts with a descriptive error on a non-finite
/// gradient or a diverged (> 1e4 or non-finite) loss.
pub fn train(
    det: &mut Detector<f32>,
    dataset: &[(Tensor<f32>, Annotation)],
    cfg: &TrainCfg,
) -> Result<Vec<LossRow>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::dataset("cannot train on an empty dataset"));
    }
    let max_label = dataset
        .iter()
        .flat_map(|(_, ann)| ann.fault_boxes())
        .map(|(_, cls)| cls)
        .max()
        .unwrap_or(0);
    if det.cfg.classes != 2 && det.cfg.classes <= max_label {
        return Err(Error::config(format!(
            "detector with {} classes cannot score part class {}: use one output \
             per part type plus background, or 2 to collapse every fault into a \
             single foreground class",
            det.cfg.classes, max_label
        )));
    }
    let mut rng = Lcg64::new(cfg.seed);
    let mut sgd = Sgd::new(cfg.momentum, cfg.weight_decay);
    let mut rows = Vec::with_capacity(cfg.total_iters);
    for iter in 0..cfg.total_iters {
        let (image, ann) = &dataset[rng.below(dataset.len())];
        let lr = learning_rate(cfg, iter);
        rows.push(train_step(det, image, ann, cfg, &mut sgd, lr, iter, &mut rng)?);
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    det: &mut Detector<f32>,
    image: &Tensor<f32>,
    ann: &Annotation,
    cfg: &TrainCfg,
    sgd: &mut Sgd,
    lr: f64,
    iter: usize,
    rng: &mut Lcg64,
) -> Result<LossRow> {
    let (_, _, ih, iw) = image.dims4()?;
    let (iw, ih) = (iw as f64, ih as f64);

    let trace = det.forward_train(image)?;
    let (objectness, deltas) = det.rpn.forward(&trace.mff1_map)?;
    let (_, _, fh, fw) = trace.mff1_map.dims4()?;
    let grid = generate_anchors(fh, fw, &det.cfg.anchors)?;

    let gt = ann.fault_boxes();
    let gt_boxes: Vec<BBox> = gt.iter().map(|(b, _)| *b).collect();
    let targets = assign_anchor_targets(&grid, iw, ih, &gt_boxes, ANCHOR_FG_IOU, ANCHOR_BG_IOU)?;
    let sampled = sample_anchor_batch(&targets, cfg.rpn_batch, rng);
    if sampled.is_empty() {
        return Err(Error::training(format!(
            "iteration {iter}: no anchors available to sample"
        )));
    }

    let mut grads = Grads::new();
    let rpn_out = rpn_loss(&objectness, &deltas, &grid, &targets, &sampled, cfg.lambda)?;
    let grad_mff1 = det.rpn.backward(
        "rpn",
        &trace.mff1_map,
        &rpn_out.grad_objectness,
        &rpn_out.grad_deltas,
        &mut grads,
    )?;

    let proposals = propose(
        &objectness,
        &deltas,
        &grid,
        iw,
        ih,
        TRAIN_PRE_NMS,
        PROPOSAL_NMS_IOU,
        TRAIN_POST_NMS,
    )?;
    let mut rois =
        sample_roi_batch(&proposals, &gt, cfg.roi_batch, cfg.roi_fg_iou, cfg.roi_bg_iou, rng)?;
    if det.cfg.classes == 2 {
        // Single-foreground detector: every faulted part trains the one
        // "fault" class, whatever its part type.
        for r in &mut rois {
            if r.label != 0 {
                r.label = 1;
            }
        }
    }
    let (roi_cls, roi_reg, grad_mff2) = if rois.is_empty() {
        (0.0, 0.0, Tensor::zeros(&trace.mff2_map.shape))
    } else {
        let banks = det.ps.forward(&trace.mff2_map)?;
        let out = roi_loss(&banks, &rois, det.cfg.anchors.stride, cfg.lambda, det.cfg.vote)?;
        let g = det.ps.backward(
            "psroi",
            &trace.mff2_map,
            &out.grad_cls_maps,
            &out.grad_reg_maps,
            &mut grads,
        )?;
        (out.cls, out.reg, g)
    };

    det.backward(&trace, &grad_mff1, &grad_mff2, &mut grads)?;

    let total = rpn_out.cls + rpn_out.reg + roi_cls + roi_reg;
    if !total.is_finite() || total > 1e4 {
        return Err(Error::training(format!(
            "iteration {iter}: loss diverged to {total}"
        )));
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::training(format!(
            "iteration {iter}: non-finite gradient in {name}"
        )));
    }

    let mut params = Vec::new();
    det.collect_trainable_mut(&mut params);
    sgd.step(&mut params, &grads, lr)?;

    Ok(LossRow {
        iter,
        lr,
        rpn_cls: rpn_out.cls,
        rpn_reg: rpn_out.reg,
        roi_cls,
        roi_reg,
        total,
    })
}

/// Renders the loss log as CSV with a fixed header. Values print with `{}`
/// (shortest round-trip form), so equal strings mean bit-equal logs.
pub fn loss_csv_string(rows: &[LossRow]) -> String {
    let mut text = String::from("iter,lr,rpn_cls,rpn_reg,roi_cls,roi_reg,total\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.iter, r.lr, r.rpn_cls, r.rpn_reg, r.roi_cls, r.roi_reg, r.total
        ));
    }
    text
}

/// Writes the loss log as CSV with a fixed header.
pub fn write_loss_csv(path: &Path, rows: &[LossRow]) -> Result<()> {
    std::fs::write(path, loss_csv_string(rows))?;
    Ok(())
}
