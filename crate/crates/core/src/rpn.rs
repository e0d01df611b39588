//! Region proposal machinery over the fused 512-channel map.
//!
//! A dense grid of anchor boxes rides on the fused feature map (nine boxes
//! per spatial cell: three scales crossed with three aspect ratios). Two
//! sibling 1x1 convolutions score each anchor (background/foreground) and
//! regress a center/log-size offset toward the nearest fault region. The
//! fusion block's own 3x3 convolution acts as the sliding window, so the
//! heads themselves stay pointwise.
//!
//! Anchor ordering convention used throughout this module: the anchor with
//! grid cell `(y, x)` and per-cell index `a` lives at flat index
//! `(y * w + x) * anchors_per_cell + a`, with `a = scale_index * ratios.len()
//! + ratio_index`. Head maps use channel `a * 2 + {0: background, 1:
//! foreground}` for objectness and `a * 4 + j` for the j-th box offset.

use crate::error::{Error, Result};
use crate::ops::{conv2d, conv2d_backward, smooth_l1};
use crate::params::{gaussian_tensor, Grads, WEIGHT_INIT_STD};
use crate::rng::Lcg64;
use crate::tensor::{Elem, Tensor};

/// Feature-map stride of the fused map relative to the input image.
pub const FEATURE_STRIDE: usize = 16;

/// Default anchor side lengths in pixels (the square root of anchor area).
pub const DEFAULT_SCALES: [f64; 3] = [32.0, 64.0, 128.0];

/// Default anchor aspect ratios (width divided by height).
pub const DEFAULT_RATIOS: [f64; 3] = [0.5, 1.0, 2.0];

/// Overlap at or above which an anchor is labeled foreground.
pub const ANCHOR_FG_IOU: f64 = 0.7;

/// Overlap below which an anchor is labeled background.
pub const ANCHOR_BG_IOU: f64 = 0.3;

/// Overlap threshold for proposal non-maximum suppression.
pub const PROPOSAL_NMS_IOU: f64 = 0.7;

/// Proposal budget before and after suppression while training.
pub const TRAIN_PRE_NMS: usize = 2000;
pub const TRAIN_POST_NMS: usize = 300;

/// Proposal budget before and after suppression at inference time.
pub const INFER_PRE_NMS: usize = 300;
pub const INFER_POST_NMS: usize = 100;

// ---------------------------------------------------------------------------
// Boxes
// ---------------------------------------------------------------------------

/// Axis-aligned box in pixel coordinates, corners exclusive of nothing:
/// width is `x2 - x1` and height is `y2 - y1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    /// True when the box has strictly positive width and height.
    pub fn is_proper(&self) -> bool {
        self.x2 > self.x1 && self.y2 > self.y1
    }

    /// True when the box lies entirely inside a `width` by `height` image.
    pub fn inside_image(&self, width: f64, height: f64) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width && self.y2 <= height
    }

    /// Intersects the box with a `width` by `height` image. Returns `None`
    /// when nothing with positive area remains.
    pub fn clipped(&self, width: f64, height: f64) -> Option<BBox> {
        let b = BBox::new(
            self.x1.max(0.0).min(width),
            self.y1.max(0.0).min(height),
            self.x2.max(0.0).min(width),
            self.y2.max(0.0).min(height),
        );
        if b.is_proper() {
            Some(b)
        } else {
            None
        }
    }
}

/// Intersection over union of two boxes. Degenerate boxes (non-positive
/// width or height) yield 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if !a.is_proper() || !b.is_proper() {
        return 0.0;
    }
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter / union
}

// ---------------------------------------------------------------------------
// Anchors
// ---------------------------------------------------------------------------

/// Anchor shape catalogue: side lengths (`scales`, in pixels of the input
/// image) crossed with aspect ratios (`ratios`, width over height).
#[derive(Debug, Clone)]
pub struct AnchorCfg {
    pub stride: usize,
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl AnchorCfg {
    /// Nine boxes per cell: sides {32, 64, 128}, ratios {0.5, 1, 2}.
    pub fn standard() -> Self {
        AnchorCfg {
            stride: FEATURE_STRIDE,
            scales: DEFAULT_SCALES.to_vec(),
            ratios: DEFAULT_RATIOS.to_vec(),
        }
    }

    /// Same layout with scales shrunk for small synthetic scenes.
    pub fn with_scales(scales: &[f64]) -> Self {
        AnchorCfg {
            scales: scales.to_vec(),
            ..AnchorCfg::standard()
        }
    }

    pub fn anchors_per_cell(&self) -> usize {
        self.scales.len() * self.ratios.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::config("anchor stride must be positive"));
        }
        if self.scales.is_empty() || self.ratios.is_empty() {
            return Err(Error::config("anchor scales and ratios must be non-empty"));
        }
        for &s in &self.scales {
            if !(s > 0.0) {
                return Err(Error::config(format!("anchor scale {s} must be positive")));
            }
        }
        for &r in &self.ratios {
            if !(r > 0.0) {
                return Err(Error::config(format!("anchor ratio {r} must be positive")));
            }
        }
        Ok(())
    }
}

/// The dense anchor set for one feature-map size, in the flat order
/// documented at the top of this module.
#[derive(Debug, Clone)]
pub struct AnchorGrid {
    pub cfg: AnchorCfg,
    pub feature_h: usize,
    pub feature_w: usize,
    pub anchors: Vec<BBox>,
}

impl AnchorGrid {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Decomposes a flat anchor index into `(cell_y, cell_x, within_cell)`.
    pub fn unflatten(&self, index: usize) -> (usize, usize, usize) {
        let per_cell = self.cfg.anchors_per_cell();
        let cell = index / per_cell;
        (cell / self.feature_w, cell % self.feature_w, index % per_cell)
    }
}

/// Lays one anchor of every scale/ratio combination over each feature-map
/// cell, centered on the cell's image-space footprint. For scale `s` and
/// ratio `r` the box has area `s^2` and width/height ratio `r`.
pub fn generate_anchors(feature_h: usize, feature_w: usize, cfg: &AnchorCfg) -> Result<AnchorGrid> {
    cfg.validate()?;
    if feature_h == 0 || feature_w == 0 {
        return Err(Error::shape("anchor grid needs a non-empty feature map"));
    }
    let mut anchors = Vec::with_capacity(feature_h * feature_w * cfg.anchors_per_cell());
    for y in 0..feature_h {
        for x in 0..feature_w {
            let cx = (x as f64 + 0.5) * cfg.stride as f64;
            let cy = (y as f64 + 0.5) * cfg.stride as f64;
            for &s in &cfg.scales {
                for &r in &cfg.ratios {
                    let w = s * r.sqrt();
                    let h = s / r.sqrt();
                    anchors.push(BBox::new(
                        cx - 0.5 * w,
                        cy - 0.5 * h,
                        cx + 0.5 * w,
                        cy + 0.5 * h,
                    ));
                }
            }
        }
    }
    Ok(AnchorGrid {
        cfg: cfg.clone(),
        feature_h,
        feature_w,
        anchors,
    })
}

// ---------------------------------------------------------------------------
// Box coding
// ---------------------------------------------------------------------------

/// Expresses `gt` as a center/log-size offset from `anchor`:
/// `(dx, dy, dw, dh)` with `dx = (gt_cx - a_cx) / a_w`, `dw = ln(gt_w / a_w)`
/// and likewise for y/h.
pub fn encode_box(anchor: &BBox, gt: &BBox) -> Result<[f64; 4]> {
    if !anchor.is_proper() || !gt.is_proper() {
        return Err(Error::shape("cannot encode a box with non-positive area"));
    }
    let (acx, acy) = anchor.center();
    let (gcx, gcy) = gt.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    Ok([
        (gcx - acx) / aw,
        (gcy - acy) / ah,
        (gt.width() / aw).ln(),
        (gt.height() / ah).ln(),
    ])
}

/// Inverse of [`encode_box`]: applies the offset `t` to `anchor`.
pub fn decode_box(anchor: &BBox, t: &[f64; 4]) -> Result<BBox> {
    if !anchor.is_proper() {
        return Err(Error::shape("cannot decode against a box with non-positive area"));
    }
    let (acx, acy) = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    let cx = acx + t[0] * aw;
    let cy = acy + t[1] * ah;
    let w = aw * t[2].exp();
    let h = ah * t[3].exp();
    Ok(BBox::new(
        cx - 0.5 * w,
        cy - 0.5 * h,
        cx + 0.5 * w,
        cy + 0.5 * h,
    ))
}

// ---------------------------------------------------------------------------
// Heads
// ---------------------------------------------------------------------------

/// The two pointwise prediction layers riding on the fused map: a
/// 2-per-anchor objectness classifier and a 4-per-anchor box regressor.
#[derive(Debug, Clone)]
pub struct RpnHeads<E: Elem = f32> {
    pub in_channels: usize,
    pub anchors_per_cell: usize,
    pub cls_weight: Tensor<E>,
    pub cls_bias: Tensor<E>,
    pub reg_weight: Tensor<E>,
    pub reg_bias: Tensor<E>,
}

impl<E: Elem> RpnHeads<E> {
    pub fn new(in_channels: usize, anchors_per_cell: usize, rng: &mut Lcg64) -> Self {
        let cls_out = 2 * anchors_per_cell;
        let reg_out = 4 * anchors_per_cell;
        RpnHeads {
            in_channels,
            anchors_per_cell,
            cls_weight: gaussian_tensor(rng, &[cls_out, in_channels, 1, 1], WEIGHT_INIT_STD),
            cls_bias: Tensor::zeros(&[cls_out]),
            reg_weight: gaussian_tensor(rng, &[reg_out, in_channels, 1, 1], WEIGHT_INIT_STD),
            reg_bias: Tensor::zeros(&[reg_out]),
        }
    }

    fn check_input(&self, fused: &Tensor<E>) -> Result<()> {
        let (_, c, _, _) = fused.dims4()?;
        if c != self.in_channels {
            return Err(Error::shape(format!(
                "proposal heads expect {} input channels, got {c}",
                self.in_channels
            )));
        }
        Ok(())
    }

    /// Runs both heads. Returns `(objectness, deltas)` with `2A` and `4A`
    /// channels at the input's spatial size.
    pub fn forward(&self, fused: &Tensor<E>) -> Result<(Tensor<E>, Tensor<E>)> {
        self.check_input(fused)?;
        let obj = conv2d(fused, &self.cls_weight, Some(&self.cls_bias), 1, 0)?;
        let reg = conv2d(fused, &self.reg_weight, Some(&self.reg_bias), 1, 0)?;
        Ok((obj, reg))
    }

    /// Backpropagates map gradients through both heads, accumulating
    /// parameter gradients under `{prefix}.cls.*` / `{prefix}.reg.*` and
    /// returning the gradient with respect to the fused input.
    pub fn backward(
        &self,
        prefix: &str,
        fused: &Tensor<E>,
        grad_objectness: &Tensor<E>,
        grad_deltas: &Tensor<E>,
        grads: &mut Grads<E>,
    ) -> Result<Tensor<E>> {
        self.check_input(fused)?;
        let cls = conv2d_backward(fused, &self.cls_weight, grad_objectness, 1, 0)?;
        let reg = conv2d_backward(fused, &self.reg_weight, grad_deltas, 1, 0)?;
        grads.add(format!("{prefix}.cls.weight"), cls.weight);
        grads.add(format!("{prefix}.cls.bias"), cls.bias);
        grads.add(format!("{prefix}.reg.weight"), reg.weight);
        grads.add(format!("{prefix}.reg.bias"), reg.bias);
        let mut grad_input = cls.input;
        grad_input.add_assign(&reg.input);
        Ok(grad_input)
    }

    pub fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<E>)>) {
        out.push((format!("{prefix}.cls.weight"), &self.cls_weight));
        out.push((format!("{prefix}.cls.bias"), &self.cls_bias));
        out.push((format!("{prefix}.reg.weight"), &self.reg_weight));
        out.push((format!("{prefix}.reg.bias"), &self.reg_bias));
    }

    pub fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<E>)>) {
        out.push((format!("{prefix}.cls.weight"), &mut self.cls_weight));
        out.push((format!("{prefix}.cls.bias"), &mut self.cls_bias));
        out.push((format!("{prefix}.reg.weight"), &mut self.reg_weight));
        out.push((format!("{prefix}.reg.bias"), &mut self.reg_bias));
    }

    pub fn collect_trainable_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Tensor<E>)>,
    ) {
        self.collect_mut(prefix, out);
    }
}

/// Foreground probability of every anchor, in flat anchor order, computed
/// as a two-way softmax over each anchor's (background, foreground) logit
/// pair. Zero logits give 0.5.
pub fn objectness_probs<E: Elem>(
    objectness: &Tensor<E>,
    anchors_per_cell: usize,
) -> Result<Vec<f64>> {
    let (n, c, h, w) = objectness.dims4()?;
    if n != 1 || c != 2 * anchors_per_cell {
        return Err(Error::shape(format!(
            "objectness map {:?} does not hold {} anchor score pairs",
            objectness.shape, anchors_per_cell
        )));
    }
    let mut probs = Vec::with_capacity(h * w * anchors_per_cell);
    for y in 0..h {
        for x in 0..w {
            for a in 0..anchors_per_cell {
                let bg = objectness.at4(0, 2 * a, y, x).to_f64();
                let fg = objectness.at4(0, 2 * a + 1, y, x).to_f64();
                let m = bg.max(fg);
                let zb = (bg - m).exp();
                let zf = (fg - m).exp();
                probs.push(zf / (zb + zf));
            }
        }
    }
    Ok(probs)
}

/// Per-anchor decoded offsets, in flat anchor order.
fn anchor_deltas<E: Elem>(deltas: &Tensor<E>, anchors_per_cell: usize) -> Result<Vec<[f64; 4]>> {
    let (n, c, h, w) = deltas.dims4()?;
    if n != 1 || c != 4 * anchors_per_cell {
        return Err(Error::shape(format!(
            "delta map {:?} does not hold {} anchor offset quads",
            deltas.shape, anchors_per_cell
        )));
    }
    let mut out = Vec::with_capacity(h * w * anchors_per_cell);
    for y in 0..h {
        for x in 0..w {
            for a in 0..anchors_per_cell {
                out.push([
                    deltas.at4(0, 4 * a, y, x).to_f64(),
                    deltas.at4(0, 4 * a + 1, y, x).to_f64(),
                    deltas.at4(0, 4 * a + 2, y, x).to_f64(),
                    deltas.at4(0, 4 * a + 3, y, x).to_f64(),
                ]);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Target assignment
// ---------------------------------------------------------------------------

/// Per-anchor training targets: `label` is -1 (ignored), 0 (background) or
/// 1 (foreground); `reg_targets` holds the encoded offset toward the
/// best-overlapping ground truth and is meaningful only where `label == 1`.
#[derive(Debug, Clone)]
pub struct RpnTargets {
    pub labels: Vec<i8>,
    pub reg_targets: Vec<[f64; 4]>,
}

impl RpnTargets {
    pub fn foreground_indices(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == 1).collect()
    }

    pub fn background_indices(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == 0).collect()
    }
}

/// Labels every anchor against the ground-truth boxes.
///
/// Anchors overlapping some ground truth at `iou_fg` or above are
/// foreground, as is every anchor tied for a ground truth's best overlap
/// (provided that overlap is positive). Anchors whose best overlap falls
/// below `iou_bg` are background; the rest are ignored. Anchors that cross
/// the image boundary are ignored outright. With no ground truth at all the
/// image is pure background and every anchor is labeled 0.
pub fn assign_anchor_targets(
    grid: &AnchorGrid,
    image_w: f64,
    image_h: f64,
    gt: &[BBox],
    iou_fg: f64,
    iou_bg: f64,
) -> Result<RpnTargets> {
    if !(0.0 <= iou_bg && iou_bg <= iou_fg && iou_fg <= 1.0) {
        return Err(Error::config(format!(
            "overlap thresholds must satisfy 0 <= bg ({iou_bg}) <= fg ({iou_fg}) <= 1"
        )));
    }
    for b in gt {
        if !b.is_proper() {
            return Err(Error::shape("ground-truth box with non-positive area"));
        }
    }
    let n = grid.len();
    let mut labels = vec![0i8; n];
    let mut reg_targets = vec![[0.0f64; 4]; n];
    if gt.is_empty() {
        return Ok(RpnTargets { labels, reg_targets });
    }

    // Overlap matrix, walked twice: once per anchor, once per ground truth.
    let mut best_iou = vec![0.0f64; n];
    let mut best_gt = vec![0usize; n];
    let mut gt_best_iou = vec![0.0f64; gt.len()];
    let inside: Vec<bool> = grid
        .anchors
        .iter()
        .map(|a| a.inside_image(image_w, image_h))
        .collect();
    for (i, anchor) in grid.anchors.iter().enumerate() {
        if !inside[i] {
            labels[i] = -1;
            continue;
        }
        for (j, g) in gt.iter().enumerate() {
            let v = iou(anchor, g);
            if v > best_iou[i] {
                best_iou[i] = v;
                best_gt[i] = j;
            }
            if v > gt_best_iou[j] {
                gt_best_iou[j] = v;
            }
        }
    }
    for i in 0..n {
        if !inside[i] {
            continue;
        }
        let forced = (0..gt.len()).any(|j| {
            gt_best_iou[j] > 0.0 && iou(&grid.anchors[i], &gt[j]) == gt_best_iou[j]
        });
        if best_iou[i] >= iou_fg || forced {
            labels[i] = 1;
            reg_targets[i] = encode_box(&grid.anchors[i], &gt[best_gt[i]])?;
        } else if best_iou[i] < iou_bg {
            labels[i] = 0;
        } else {
            labels[i] = -1;
        }
    }
    Ok(RpnTargets { labels, reg_targets })
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Loss value split by term, plus gradients with respect to the two head
/// maps (zero outside the sampled anchors).
#[derive(Debug, Clone)]
pub struct RpnLossOut<E: Elem = f32> {
    pub total: f64,
    pub cls: f64,
    pub reg: f64,
    pub grad_objectness: Tensor<E>,
    pub grad_deltas: Tensor<E>,
}

/// Objectness cross-entropy plus `lambda`-weighted smooth-L1 box loss over
/// a sampled anchor minibatch. Both terms are normalized by the number of
/// sampled anchors; the box term only draws from foreground anchors. The
/// cross-entropy is evaluated through a log-sum-exp so a vanishing
/// foreground probability cannot produce a non-finite value.
pub fn rpn_loss<E: Elem>(
    objectness: &Tensor<E>,
    deltas: &Tensor<E>,
    grid: &AnchorGrid,
    targets: &RpnTargets,
    sampled: &[usize],
    lambda: f64,
) -> Result<RpnLossOut<E>> {
    let per_cell = grid.cfg.anchors_per_cell();
    let (n, c, h, w) = objectness.dims4()?;
    if n != 1 || c != 2 * per_cell || h != grid.feature_h || w != grid.feature_w {
        return Err(Error::shape(format!(
            "objectness map {:?} does not match a {}x{} grid with {} anchors per cell",
            objectness.shape, grid.feature_h, grid.feature_w, per_cell
        )));
    }
    let (dn, dc, dh, dw) = deltas.dims4()?;
    if dn != 1 || dc != 4 * per_cell || dh != h || dw != w {
        return Err(Error::shape(format!(
            "delta map {:?} does not pair with objectness map {:?}",
            deltas.shape, objectness.shape
        )));
    }
    if targets.labels.len() != grid.len() {
        return Err(Error::shape(format!(
            "targets cover {} anchors but the grid holds {}",
            targets.labels.len(),
            grid.len()
        )));
    }
    if sampled.is_empty() {
        return Err(Error::training("empty anchor minibatch"));
    }

    let inv_n = 1.0 / sampled.len() as f64;
    let mut cls_sum = 0.0;
    let mut reg_sum = 0.0;
    let mut grad_obj: Tensor<E> = Tensor::zeros(&objectness.shape);
    let mut grad_del: Tensor<E> = Tensor::zeros(&deltas.shape);

    for &idx in sampled {
        if idx >= grid.len() {
            return Err(Error::shape(format!("sampled anchor {idx} out of range")));
        }
        let label = targets.labels[idx];
        if label < 0 {
            return Err(Error::training(format!(
                "sampled anchor {idx} carries an ignore label"
            )));
        }
        let (y, x, a) = grid.unflatten(idx);

        let bg = objectness.at4(0, 2 * a, y, x).to_f64();
        let fg = objectness.at4(0, 2 * a + 1, y, x).to_f64();
        let m = bg.max(fg);
        let log_z = m + ((bg - m).exp() + (fg - m).exp()).ln();
        let picked = if label == 1 { fg } else { bg };
        cls_sum += log_z - picked;

        let p_bg = (bg - log_z).exp();
        let p_fg = (fg - log_z).exp();
        let (g_bg, g_fg) = if label == 1 {
            (p_bg, p_fg - 1.0)
        } else {
            (p_bg - 1.0, p_fg)
        };
        let ob = grad_obj.offset4(0, 2 * a, y, x);
        let of = grad_obj.offset4(0, 2 * a + 1, y, x);
        grad_obj.data[ob] = grad_obj.data[ob] + E::from_f64(g_bg * inv_n);
        grad_obj.data[of] = grad_obj.data[of] + E::from_f64(g_fg * inv_n);

        if label == 1 {
            let t_star = targets.reg_targets[idx];
            for j in 0..4 {
                let t = deltas.at4(0, 4 * a + j, y, x).to_f64();
                let (v, dv) = smooth_l1(t - t_star[j]);
                reg_sum += v;
                let od = grad_del.offset4(0, 4 * a + j, y, x);
                grad_del.data[od] = grad_del.data[od] + E::from_f64(lambda * dv * inv_n);
            }
        }
    }

    let cls = cls_sum * inv_n;
    let reg = lambda * reg_sum * inv_n;
    Ok(RpnLossOut {
        total: cls + reg,
        cls,
        reg,
        grad_objectness: grad_obj,
        grad_deltas: grad_del,
    })
}

// ---------------------------------------------------------------------------
// Proposals
// ---------------------------------------------------------------------------

/// A candidate fault region with its foreground score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub bbox: BBox,
    pub score: f64,
}

/// Greedy non-maximum suppression. Returns the indices of the kept boxes in
/// descending score order (ties broken by lower index); a box is dropped
/// when it overlaps an already-kept box above `iou_threshold`.
pub fn nms(boxes: &[BBox], scores: &[f64], iou_threshold: f64) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len(), "one score per box");
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        if kept.iter().all(|&k| iou(&boxes[i], &boxes[k]) <= iou_threshold) {
            kept.push(i);
        }
    }
    kept
}

/// Turns the head maps into scored, decoded, clipped proposals: the best
/// `pre_nms_n` anchors by foreground score enter greedy suppression at
/// `nms_iou`, and the best `post_nms_n` survivors come back with scores in
/// non-increasing order.
pub fn propose<E: Elem>(
    objectness: &Tensor<E>,
    deltas: &Tensor<E>,
    grid: &AnchorGrid,
    image_w: f64,
    image_h: f64,
    pre_nms_n: usize,
    nms_iou: f64,
    post_nms_n: usize,
) -> Result<Vec<Proposal>> {
    let per_cell = grid.cfg.anchors_per_cell();
    let scores = objectness_probs(objectness, per_cell)?;
    let offsets = anchor_deltas(deltas, per_cell)?;
    if scores.len() != grid.len() {
        return Err(Error::shape(format!(
            "head maps cover {} anchors but the grid holds {}",
            scores.len(),
            grid.len()
        )));
    }

    // Decode, clip, and drop boxes that vanish off the image.
    let mut candidates: Vec<Proposal> = Vec::new();
    for i in 0..grid.len() {
        let decoded = decode_box(&grid.anchors[i], &offsets[i])?;
        if let Some(clipped) = decoded.clipped(image_w, image_h) {
            candidates.push(Proposal {
                bbox: clipped,
                score: scores[i],
            });
        }
    }

    candidates.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
    candidates.truncate(pre_nms_n);

    let boxes: Vec<BBox> = candidates.iter().map(|p| p.bbox).collect();
    let kept_scores: Vec<f64> = candidates.iter().map(|p| p.score).collect();
    let kept = nms(&boxes, &kept_scores, nms_iou);
    Ok(kept
        .into_iter()
        .take(post_nms_n)
        .map(|i| candidates[i])
        .collect())
}
