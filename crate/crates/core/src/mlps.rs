//! Position-sensitive scoring head: per-class score-map banks, bin-average
//! RoI pooling, vote aggregation, box refinement, and the RoI-stage loss.
//!
//! Two pointwise convolutions turn the 256-channel fused map into a
//! classification bank of `k^2 * (C+1)` channels and a class-agnostic
//! regression bank of `4 * k^2` channels. A candidate box is divided into a
//! `k x k` grid of bins; bin `(m, n)` for class `c` averages the pixels it
//! covers on its *own* score map, so every bin consults a different channel
//! and the head stays parameter-free past the banks.
//!
//! Channel layout (documented once, used everywhere): the classification
//! channel for class `c` and bin `(m, n)` is `c*k*k + m*k + n`, with `m` the
//! row and `n` the column; the regression channel for coordinate `j` of bin
//! `(m, n)` is `j*k*k + m*k + n`. Class 0 is background.

use crate::error::{Error, Result};
use crate::ops::{conv2d, conv2d_backward, smooth_l1, softmax, softmax_cross_entropy};
use crate::params::{gaussian_tensor, Grads, WEIGHT_INIT_STD};
use crate::rng::Lcg64;
use crate::rpn::BBox;
use crate::tensor::{Elem, Tensor};

/// Default pooling grid: each candidate box is divided into 7 x 7 bins.
pub const PS_GRID: usize = 7;

// ---------------------------------------------------------------------------
// Banks
// ---------------------------------------------------------------------------

/// The two score-map banks produced from the fused 256-channel map.
#[derive(Debug, Clone)]
pub struct PsBanks<E: Elem = f32> {
    pub k: usize,
    /// Number of classes including background (class 0).
    pub classes: usize,
    /// `(1, k*k*classes, H, W)`.
    pub cls_maps: Tensor<E>,
    /// `(1, 4*k*k, H, W)`.
    pub reg_maps: Tensor<E>,
}

impl<E: Elem> PsBanks<E> {
    fn check(&self) -> Result<(usize, usize)> {
        let kk = self.k * self.k;
        let (n, c, h, w) = self.cls_maps.dims4()?;
        if n != 1 || c != kk * self.classes {
            return Err(Error::shape(format!(
                "classification bank {:?} does not hold {} maps of {} classes",
                self.cls_maps.shape, kk, self.classes
            )));
        }
        let (rn, rc, rh, rw) = self.reg_maps.dims4()?;
        if rn != 1 || rc != 4 * kk || rh != h || rw != w {
            return Err(Error::shape(format!(
                "regression bank {:?} does not pair with classification bank {:?}",
                self.reg_maps.shape, self.cls_maps.shape
            )));
        }
        Ok((h, w))
    }
}

/// The pointwise layers that produce the banks.
#[derive(Debug, Clone)]
pub struct PsHead<E: Elem = f32> {
    pub in_channels: usize,
    pub k: usize,
    pub classes: usize,
    pub cls_weight: Tensor<E>,
    pub cls_bias: Tensor<E>,
    pub reg_weight: Tensor<E>,
    pub reg_bias: Tensor<E>,
}

impl<E: Elem> PsHead<E> {
    pub fn new(in_channels: usize, classes: usize, k: usize, rng: &mut Lcg64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::config(
                "need at least one foreground class plus background",
            ));
        }
        if k == 0 {
            return Err(Error::config("pooling grid must be non-empty"));
        }
        let kk = k * k;
        Ok(PsHead {
            in_channels,
            k,
            classes,
            cls_weight: gaussian_tensor(rng, &[kk * classes, in_channels, 1, 1], WEIGHT_INIT_STD),
            cls_bias: Tensor::zeros(&[kk * classes]),
            reg_weight: gaussian_tensor(rng, &[4 * kk, in_channels, 1, 1], WEIGHT_INIT_STD),
            reg_bias: Tensor::zeros(&[4 * kk]),
        })
    }

    fn check_input(&self, fused: &Tensor<E>) -> Result<()> {
        let (_, c, _, _) = fused.dims4()?;
        if c != self.in_channels {
            return Err(Error::shape(format!(
                "score-map head expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        Ok(())
    }

    pub fn forward(&self, fused: &Tensor<E>) -> Result<PsBanks<E>> {
        self.check_input(fused)?;
        Ok(PsBanks {
            k: self.k,
            classes: self.classes,
            cls_maps: conv2d(fused, &self.cls_weight, Some(&self.cls_bias), 1, 0)?,
            reg_maps: conv2d(fused, &self.reg_weight, Some(&self.reg_bias), 1, 0)?,
        })
    }

    /// Backpropagates bank gradients, accumulating parameter gradients under
    /// `{prefix}.cls.*` / `{prefix}.reg.*` and returning the gradient with
    /// respect to the fused input.
    pub fn backward(
        &self,
        prefix: &str,
        fused: &Tensor<E>,
        grad_cls_maps: &Tensor<E>,
        grad_reg_maps: &Tensor<E>,
        grads: &mut Grads<E>,
    ) -> Result<Tensor<E>> {
        self.check_input(fused)?;
        let cls = conv2d_backward(fused, &self.cls_weight, grad_cls_maps, 1, 0)?;
        let reg = conv2d_backward(fused, &self.reg_weight, grad_reg_maps, 1, 0)?;
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

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

/// Bin-averaged values for one candidate box: `cls[c*k*k + m*k + n]` and
/// `reg[j*k*k + m*k + n]`, matching the bank channel layout.
#[derive(Debug, Clone)]
pub struct PooledRoi {
    pub k: usize,
    pub classes: usize,
    pub cls: Vec<f64>,
    pub reg: Vec<f64>,
}

/// Pixel range `[start, end)` of bin `idx` along one axis, after snapping
/// the fractional bin boundaries outward to whole feature pixels and
/// clamping to the map. Bins may share boundary pixels; a bin clamped away
/// entirely comes back empty.
fn bin_bounds(lo: f64, hi: f64, k: usize, idx: usize, limit: usize) -> (usize, usize) {
    let bin = (hi - lo) / k as f64;
    let start = (lo + idx as f64 * bin).floor() as isize;
    let end = (lo + (idx + 1) as f64 * bin).ceil() as isize;
    let start = start.clamp(0, limit as isize) as usize;
    let end = end.clamp(0, limit as isize) as usize;
    (start, end)
}

fn check_roi_against_map(roi: &BBox, stride: usize, h: usize, w: usize) -> Result<[f64; 4]> {
    if !roi.is_proper() {
        return Err(Error::shape("cannot pool a box with non-positive area"));
    }
    let s = stride as f64;
    let (x1, y1, x2, y2) = (roi.x1 / s, roi.y1 / s, roi.x2 / s, roi.y2 / s);
    if x2 <= 0.0 || y2 <= 0.0 || x1 >= w as f64 || y1 >= h as f64 {
        return Err(Error::shape(format!(
            "box ({}, {}, {}, {}) lies entirely outside the {w}x{h} feature map at stride {stride}",
            roi.x1, roi.y1, roi.x2, roi.y2
        )));
    }
    Ok([x1, y1, x2, y2])
}

/// Position-sensitive pooling of one box: bin `(m, n)` for class `c` is the
/// arithmetic mean of the pixels it covers on channel `c*k*k + m*k + n`
/// (and coordinate `j` reads `j*k*k + m*k + n` of the regression bank).
/// Empty bins pool to 0. Boxes entirely off the feature map are rejected.
pub fn mlps_roi_pool<E: Elem>(banks: &PsBanks<E>, roi: &BBox, stride: usize) -> Result<PooledRoi> {
    let (h, w) = banks.check()?;
    let [x1, y1, x2, y2] = check_roi_against_map(roi, stride, h, w)?;
    let k = banks.k;
    let kk = k * k;
    let mut cls = vec![0.0f64; kk * banks.classes];
    let mut reg = vec![0.0f64; 4 * kk];
    for m in 0..k {
        let (ys, ye) = bin_bounds(y1, y2, k, m, h);
        for n in 0..k {
            let (xs, xe) = bin_bounds(x1, x2, k, n, w);
            let count = (ye.saturating_sub(ys)) * (xe.saturating_sub(xs));
            if count == 0 {
                continue;
            }
            let bin = m * k + n;
            for c in 0..banks.classes {
                let ch = c * kk + bin;
                let mut sum = 0.0;
                for y in ys..ye {
                    for x in xs..xe {
                        sum += banks.cls_maps.at4(0, ch, y, x).to_f64();
                    }
                }
                cls[ch] = sum / count as f64;
            }
            for j in 0..4 {
                let ch = j * kk + bin;
                let mut sum = 0.0;
                for y in ys..ye {
                    for x in xs..xe {
                        sum += banks.reg_maps.at4(0, ch, y, x).to_f64();
                    }
                }
                reg[ch] = sum / count as f64;
            }
        }
    }
    Ok(PooledRoi {
        k,
        classes: banks.classes,
        cls,
        reg,
    })
}

/// Adjoint of [`mlps_roi_pool`]: spreads each bin's gradient uniformly
/// (1/N) over the pixels that bin averaged, accumulating into the two bank
/// gradient maps.
pub fn roi_pool_backward<E: Elem>(
    banks: &PsBanks<E>,
    roi: &BBox,
    stride: usize,
    grad_cls: &[f64],
    grad_reg: &[f64],
    grad_cls_maps: &mut Tensor<E>,
    grad_reg_maps: &mut Tensor<E>,
) -> Result<()> {
    let (h, w) = banks.check()?;
    let [x1, y1, x2, y2] = check_roi_against_map(roi, stride, h, w)?;
    let k = banks.k;
    let kk = k * k;
    if grad_cls.len() != kk * banks.classes || grad_reg.len() != 4 * kk {
        return Err(Error::shape("pooled gradient lengths do not match the banks"));
    }
    for m in 0..k {
        let (ys, ye) = bin_bounds(y1, y2, k, m, h);
        for n in 0..k {
            let (xs, xe) = bin_bounds(x1, x2, k, n, w);
            let count = (ye.saturating_sub(ys)) * (xe.saturating_sub(xs));
            if count == 0 {
                continue;
            }
            let inv = 1.0 / count as f64;
            let bin = m * k + n;
            for c in 0..banks.classes {
                let ch = c * kk + bin;
                let share = E::from_f64(grad_cls[ch] * inv);
                for y in ys..ye {
                    for x in xs..xe {
                        let o = grad_cls_maps.offset4(0, ch, y, x);
                        grad_cls_maps.data[o] = grad_cls_maps.data[o] + share;
                    }
                }
            }
            for j in 0..4 {
                let ch = j * kk + bin;
                let share = E::from_f64(grad_reg[ch] * inv);
                for y in ys..ye {
                    for x in xs..xe {
                        let o = grad_reg_maps.offset4(0, ch, y, x);
                        grad_reg_maps.data[o] = grad_reg_maps.data[o] + share;
                    }
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Voting and refinement
// ---------------------------------------------------------------------------

/// How bin values aggregate into a per-class response: the printed formula
/// sums the k^2 bin averages; the prose variant divides that sum by k^2.
/// The argmax class is identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteRule {
    Sum,
    Mean,
}

impl VoteRule {
    fn factor(&self, k: usize) -> f64 {
        match self {
            VoteRule::Sum => 1.0,
            VoteRule::Mean => 1.0 / (k * k) as f64,
        }
    }
}

/// Aggregates pooled bins into per-class responses `p` and softmax
/// probabilities `s`.
pub fn vote_and_score(pooled: &PooledRoi, rule: VoteRule) -> (Vec<f64>, Vec<f64>) {
    let kk = pooled.k * pooled.k;
    let f = rule.factor(pooled.k);
    let p: Vec<f64> = (0..pooled.classes)
        .map(|c| pooled.cls[c * kk..(c + 1) * kk].iter().sum::<f64>() * f)
        .collect();
    let s = softmax(&p);
    (p, s)
}

/// Averages the regression bins into one offset quad for the box.
pub fn regress_roi(pooled: &PooledRoi) -> [f64; 4] {
    let kk = pooled.k * pooled.k;
    let mut out = [0.0f64; 4];
    for (j, slot) in out.iter_mut().enumerate() {
        *slot = pooled.reg[j * kk..(j + 1) * kk].iter().sum::<f64>() / kk as f64;
    }
    out
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// One sampled candidate box with its class label (0 = background) and,
/// for foreground boxes, the encoded offset toward its ground truth.
#[derive(Debug, Clone)]
pub struct RoiSample {
    pub bbox: BBox,
    pub label: usize,
    pub target: [f64; 4],
}

/// Loss value split by term, plus gradients with respect to the two banks.
#[derive(Debug, Clone)]
pub struct RoiLossOut<E: Elem = f32> {
    pub total: f64,
    pub cls: f64,
    pub reg: f64,
    pub grad_cls_maps: Tensor<E>,
    pub grad_reg_maps: Tensor<E>,
}

/// Cross-entropy over the voted class responses plus `lambda`-weighted
/// smooth-L1 on the refined offsets of foreground boxes, averaged over the
/// sampled boxes. Everything past the banks is fixed arithmetic, so the
/// gradients land directly on the two bank maps.
pub fn roi_loss<E: Elem>(
    banks: &PsBanks<E>,
    rois: &[RoiSample],
    stride: usize,
    lambda: f64,
    rule: VoteRule,
) -> Result<RoiLossOut<E>> {
    banks.check()?;
    if rois.is_empty() {
        return Err(Error::training("empty box minibatch"));
    }
    let kk = banks.k * banks.k;
    let inv_n = 1.0 / rois.len() as f64;
    let vote_f = rule.factor(banks.k);
    let mut cls_sum = 0.0;
    let mut reg_sum = 0.0;
    let mut grad_cls_maps: Tensor<E> = Tensor::zeros(&banks.cls_maps.shape);
    let mut grad_reg_maps: Tensor<E> = Tensor::zeros(&banks.reg_maps.shape);

    for roi in rois {
        if roi.label >= banks.classes {
            return Err(Error::shape(format!(
                "label {} outside the {}-class head",
                roi.label, banks.classes
            )));
        }
        let pooled = mlps_roi_pool(banks, &roi.bbox, stride)?;
        let (p, _) = vote_and_score(&pooled, rule);
        let (ce, grad_p) = softmax_cross_entropy(&p, roi.label);
        cls_sum += ce;

        // Chain: d p_c / d bin = vote factor; spread per class over bins.
        let mut grad_cls = vec![0.0f64; kk * banks.classes];
        for c in 0..banks.classes {
            let g = grad_p[c] * vote_f * inv_n;
            for b in 0..kk {
                grad_cls[c * kk + b] = g;
            }
        }

        let mut grad_reg = vec![0.0f64; 4 * kk];
        if roi.label > 0 {
            let r = regress_roi(&pooled);
            for j in 0..4 {
                let (v, dv) = smooth_l1(r[j] - roi.target[j]);
                reg_sum += v;
                // The refined offset is the mean of k^2 bins.
                let g = lambda * dv * inv_n / kk as f64;
                for b in 0..kk {
                    grad_reg[j * kk + b] = g;
                }
            }
        }

        roi_pool_backward(
            banks,
            &roi.bbox,
            stride,
            &grad_cls,
            &grad_reg,
            &mut grad_cls_maps,
            &mut grad_reg_maps,
        )?;
    }

    let cls = cls_sum * inv_n;
    let reg = lambda * reg_sum * inv_n;
    Ok(RoiLossOut {
        total: cls + reg,
        cls,
        reg,
        grad_cls_maps,
        grad_reg_maps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_banks(k: usize, classes: usize, h: usize, w: usize, v_cls: f64, v_reg: f64) -> PsBanks<f64> {
        PsBanks {
            k,
            classes,
            cls_maps: Tensor::filled(&[1, k * k * classes, h, w], v_cls),
            reg_maps: Tensor::filled(&[1, 4 * k * k, h, w], v_reg),
        }
    }

    #[test]
    fn bank_channel_counts_follow_grid_and_classes() {
        let mut rng = Lcg64::new(5);
        let head: PsHead = PsHead::new(256, 2, 7, &mut rng).unwrap();
        let x = Tensor::from_fn(&[1, 256, 14, 14], |_| rng.uniform(-1.0, 1.0) as f32);
        let banks = head.forward(&x).unwrap();
        assert_eq!(banks.cls_maps.shape, vec![1, 98, 14, 14]);
        assert_eq!(banks.reg_maps.shape, vec![1, 196, 14, 14]);

        let wide: PsHead = PsHead::new(256, 21, 7, &mut rng).unwrap();
        assert_eq!(wide.cls_weight.shape[0], 1029);

        let narrow = Tensor::zeros(&[1, 128, 14, 14]);
        assert!(head.forward(&narrow).is_err());
    }

    #[test]
    fn banks_match_direct_convolution() {
        let mut rng = Lcg64::new(17);
        let head: PsHead = PsHead::new(16, 3, 3, &mut rng).unwrap();
        let x = Tensor::from_fn(&[1, 16, 6, 6], |_| rng.uniform(-1.0, 1.0) as f32);
        let banks = head.forward(&x).unwrap();
        let cls_ref = conv2d(&x, &head.cls_weight, Some(&head.cls_bias), 1, 0).unwrap();
        let reg_ref = conv2d(&x, &head.reg_weight, Some(&head.reg_bias), 1, 0).unwrap();
        assert_eq!(banks.cls_maps.data, cls_ref.data);
        assert_eq!(banks.reg_maps.data, reg_ref.data);
    }

    #[test]
    fn constant_maps_pool_to_the_constant() {
        let banks = const_banks(7, 2, 14, 14, 0.37, -0.8);
        let roi = BBox::new(13.0, 27.0, 181.0, 166.0);
        let pooled = mlps_roi_pool(&banks, &roi, 16).unwrap();
        for &v in &pooled.cls {
            assert!((v - 0.37).abs() < 1e-12);
        }
        for &v in &pooled.reg {
            assert!((v + 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn k_pixel_roi_reads_each_bins_own_pixel() {
        let k = 3;
        let classes = 2;
        let mut banks = const_banks(k, classes, 8, 8, 0.0, 0.0);
        // Give channel (c, m, n) a distinctive value at pixel (m, n).
        for c in 0..classes {
            for m in 0..k {
                for n in 0..k {
                    let ch = c * k * k + m * k + n;
                    banks
                        .cls_maps
                        .set4(0, ch, m, n, (100 * c + 10 * m + n) as f64);
                }
            }
        }
        let roi = BBox::new(0.0, 0.0, (k * 16) as f64, (k * 16) as f64);
        let pooled = mlps_roi_pool(&banks, &roi, 16).unwrap();
        for c in 0..classes {
            for m in 0..k {
                for n in 0..k {
                    let got = pooled.cls[c * k * k + m * k + n];
                    assert_eq!(got, (100 * c + 10 * m + n) as f64);
                }
            }
        }
    }

    #[test]
    fn pooling_matches_pixel_loop_oracle() {
        let mut rng = Lcg64::new(808);
        for trial in 0..40 {
            let k = if trial % 2 == 0 { 3 } else { 7 };
            let classes = 1 + (trial % 3) + 1;
            let h = 4 + rng.below(17) as usize;
            let w = 4 + rng.below(17) as usize;
            let banks = PsBanks::<f64> {
                k,
                classes,
                cls_maps: Tensor::from_fn(&[1, k * k * classes, h, w], |_| rng.uniform(-1.0, 1.0)),
                reg_maps: Tensor::from_fn(&[1, 4 * k * k, h, w], |_| rng.uniform(-1.0, 1.0)),
            };
            let stride = 16.0;
            let x1 = rng.uniform(-10.0, (w as f64 - 1.5) * stride);
            let y1 = rng.uniform(-10.0, (h as f64 - 1.5) * stride);
            let roi = BBox::new(
                x1,
                y1,
                x1 + rng.uniform(stride, 20.0 * stride),
                y1 + rng.uniform(stride, 20.0 * stride),
            );
            let pooled = mlps_roi_pool(&banks, &roi, 16).unwrap();

            // Oracle: iterate every feature pixel, test membership in the
            // snapped bin rectangle, average explicitly.
            let kk = k * k;
            for c in 0..classes {
                for m in 0..k {
                    for n in 0..k {
                        let x1f = roi.x1 / stride;
                        let y1f = roi.y1 / stride;
                        let bw = (roi.x2 / stride - x1f) / k as f64;
                        let bh = (roi.y2 / stride - y1f) / k as f64;
                        let xs = (x1f + n as f64 * bw).floor().max(0.0) as isize;
                        let xe = ((x1f + (n + 1) as f64 * bw).ceil() as isize).min(w as isize);
                        let ys = (y1f + m as f64 * bh).floor().max(0.0) as isize;
                        let ye = ((y1f + (m + 1) as f64 * bh).ceil() as isize).min(h as isize);
                        let ch = c * kk + m * k + n;
                        let mut sum = 0.0;
                        let mut cnt = 0usize;
                        for y in 0..h as isize {
                            for x in 0..w as isize {
                                if y >= ys && y < ye && x >= xs && x < xe {
                                    sum += banks.cls_maps.at4(0, ch, y as usize, x as usize);
                                    cnt += 1;
                                }
                            }
                        }
                        let want = if cnt == 0 { 0.0 } else { sum / cnt as f64 };
                        assert_eq!(pooled.cls[ch], want, "trial {trial} c{c} m{m} n{n}");
                    }
                }
            }
        }
    }

    #[test]
    fn each_bin_reads_exactly_one_map_per_class() {
        let mut rng = Lcg64::new(99);
        let k = 3;
        let banks = PsBanks::<f64> {
            k,
            classes: 2,
            cls_maps: Tensor::from_fn(&[1, 18, 10, 10], |_| rng.uniform(-1.0, 1.0)),
            reg_maps: Tensor::from_fn(&[1, 36, 10, 10], |_| rng.uniform(-1.0, 1.0)),
        };
        let roi = BBox::new(20.0, 20.0, 120.0, 140.0);
        let base = mlps_roi_pool(&banks, &roi, 16).unwrap();

        // Scramble every classification channel except bin (1, 2) of class 1;
        // that bin's pooled value must not move.
        let keep = 1 * k * k + 1 * k + 2;
        let mut scrambled = banks.clone();
        for ch in 0..18 {
            if ch == keep {
                continue;
            }
            for y in 0..10 {
                for x in 0..10 {
                    scrambled.cls_maps.set4(0, ch, y, x, rng.uniform(-50.0, 50.0));
                }
            }
        }
        let after = mlps_roi_pool(&scrambled, &roi, 16).unwrap();
        assert_eq!(base.cls[keep], after.cls[keep]);
    }

    #[test]
    fn fully_outside_rois_are_rejected_and_degenerate_rois_too() {
        let banks = const_banks(3, 2, 8, 8, 0.0, 0.0);
        // 8x8 map at stride 16 covers 128 pixels.
        assert!(mlps_roi_pool(&banks, &BBox::new(130.0, 10.0, 160.0, 40.0), 16).is_err());
        assert!(mlps_roi_pool(&banks, &BBox::new(-40.0, -40.0, -2.0, -2.0), 16).is_err());
        assert!(mlps_roi_pool(&banks, &BBox::new(10.0, 10.0, 10.0, 40.0), 16).is_err());
        // Partial overlap is fine.
        assert!(mlps_roi_pool(&banks, &BBox::new(100.0, 10.0, 160.0, 40.0), 16).is_ok());
    }

    #[test]
    fn vote_rules_agree_on_the_argmax() {
        let k = 7;
        let pooled = PooledRoi {
            k,
            classes: 3,
            cls: {
                let mut v = vec![0.2; k * k];
                v.extend(vec![0.9; k * k]);
                v.extend(vec![0.4; k * k]);
                v
            },
            reg: vec![0.0; 4 * k * k],
        };
        let (p_sum, s_sum) = vote_and_score(&pooled, VoteRule::Sum);
        let (p_mean, s_mean) = vote_and_score(&pooled, VoteRule::Mean);
        assert!((p_sum[1] - 49.0 * 0.9).abs() < 1e-12);
        assert!((p_mean[1] - 0.9).abs() < 1e-12);
        let argmax = |s: &[f64]| {
            s.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(argmax(&s_sum), 1);
        assert_eq!(argmax(&s_mean), 1);
    }

    #[test]
    fn identical_class_responses_split_the_score() {
        let k = 7;
        let pooled = PooledRoi {
            k,
            classes: 2,
            cls: vec![0.31; 2 * k * k],
            reg: vec![0.0; 4 * k * k],
        };
        let (_, s) = vote_and_score(&pooled, VoteRule::Sum);
        assert!((s[0] - 0.5).abs() < 1e-12);
        assert!((s[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn positive_rescaling_never_moves_the_argmax() {
        let mut rng = Lcg64::new(314);
        for _ in 0..200 {
            let k = 3;
            let classes = 4;
            let pooled = PooledRoi {
                k,
                classes,
                cls: (0..classes * k * k).map(|_| rng.uniform(-2.0, 2.0)).collect(),
                reg: vec![0.0; 4 * k * k],
            };
            let scale = rng.uniform(0.01, 50.0);
            let scaled = PooledRoi {
                cls: pooled.cls.iter().map(|v| v * scale).collect(),
                ..pooled.clone()
            };
            let (_, s) = vote_and_score(&pooled, VoteRule::Sum);
            let (_, s2) = vote_and_score(&scaled, VoteRule::Sum);
            let argmax = |s: &[f64]| {
                s.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0
            };
            assert_eq!(argmax(&s), argmax(&s2));
        }
    }

    #[test]
    fn constant_regression_bins_pass_through() {
        let k = 7;
        let kk = k * k;
        let mut reg = vec![0.0; 4 * kk];
        for (j, v) in [0.1, -0.2, 0.05, 0.3].iter().enumerate() {
            for b in 0..kk {
                reg[j * kk + b] = *v;
            }
        }
        let pooled = PooledRoi {
            k,
            classes: 2,
            cls: vec![0.0; 2 * kk],
            reg,
        };
        let r = regress_roi(&pooled);
        assert!((r[0] - 0.1).abs() < 1e-12);
        assert!((r[1] + 0.2).abs() < 1e-12);
        assert!((r[2] - 0.05).abs() < 1e-12);
        assert!((r[3] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_offsets_leave_the_box_unchanged() {
        use crate::rpn::decode_box;
        let k = 7;
        let pooled = PooledRoi {
            k,
            classes: 2,
            cls: vec![0.0; 2 * k * k],
            reg: vec![0.0; 4 * k * k],
        };
        let roi = BBox::new(32.0, 48.0, 96.0, 112.0);
        let refined = decode_box(&roi, &regress_roi(&pooled)).unwrap();
        assert!((refined.x1 - roi.x1).abs() < 1e-12);
        assert!((refined.y2 - roi.y2).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_hand_computed_value() {
        // Constant maps: class 0 bins pool to 0.2, class 1 bins to 0.1,
        // regression bins to 0.3. With k = 3 and the sum rule the class
        // responses are (1.8, 0.9); a foreground box labeled 1 with zero
        // targets then costs ln(e^1.8 + e^0.9) - 0.9 for classification and
        // 4 * smooth_l1(0.3) = 0.18 for regression.
        let k = 3;
        let kk = k * k;
        let mut banks = const_banks(k, 2, 8, 8, 0.0, 0.3);
        for ch in 0..kk {
            for y in 0..8 {
                for x in 0..8 {
                    banks.cls_maps.set4(0, ch, y, x, 0.2);
                    banks.cls_maps.set4(0, kk + ch, y, x, 0.1);
                }
            }
        }
        let rois = [RoiSample {
            bbox: BBox::new(16.0, 16.0, 112.0, 112.0),
            label: 1,
            target: [0.0; 4],
        }];
        let out = roi_loss(&banks, &rois, 16, 1.0, VoteRule::Sum).unwrap();
        assert!((out.cls - 1.2411538747320883).abs() < 1e-12);
        assert!((out.reg - 0.18).abs() < 1e-12);
        assert!((out.total - 1.4211538747320882).abs() < 1e-12);
    }

    #[test]
    fn background_boxes_skip_regression() {
        let banks = const_banks(3, 2, 8, 8, 0.1, 5.0);
        let rois = [RoiSample {
            bbox: BBox::new(16.0, 16.0, 80.0, 80.0),
            label: 0,
            target: [1.0; 4],
        }];
        let out = roi_loss(&banks, &rois, 16, 1.0, VoteRule::Sum).unwrap();
        assert_eq!(out.reg, 0.0);
        assert!(out.grad_reg_maps.data.iter().all(|&g| g == 0.0));
        // Equal constant maps for both classes: even split.
        assert!((out.cls - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn dominant_correct_class_costs_nothing() {
        let k = 3;
        let kk = k * k;
        let mut banks = const_banks(k, 2, 8, 8, 0.0, 0.0);
        for ch in 0..kk {
            for y in 0..8 {
                for x in 0..8 {
                    banks.cls_maps.set4(0, ch, y, x, -20.0);
                    banks.cls_maps.set4(0, kk + ch, y, x, 20.0);
                }
            }
        }
        let rois = [RoiSample {
            bbox: BBox::new(16.0, 16.0, 112.0, 112.0),
            label: 1,
            target: [0.0; 4],
        }];
        let out = roi_loss(&banks, &rois, 16, 1.0, VoteRule::Sum).unwrap();
        assert_eq!(out.total, 0.0);
    }

    #[test]
    fn pooling_gradient_is_uniform_over_bin_pixels() {
        // Push gradient 1 into a single pooled value and read back the map:
        // every pixel of that bin gets 1/N, everything else stays 0.
        let k = 3;
        let classes = 2;
        let banks = const_banks(k, classes, 10, 10, 0.0, 0.0);
        let roi = BBox::new(8.0, 8.0, 152.0, 136.0);
        let target = 1 * k * k + 2 * k + 1; // class 1, bin (2, 1)
        let mut grad_cls = vec![0.0; k * k * classes];
        grad_cls[target] = 1.0;
        let grad_reg = vec![0.0; 4 * k * k];
        let mut g_cls: Tensor<f64> = Tensor::zeros(&banks.cls_maps.shape);
        let mut g_reg: Tensor<f64> = Tensor::zeros(&banks.reg_maps.shape);
        roi_pool_backward(&banks, &roi, 16, &grad_cls, &grad_reg, &mut g_cls, &mut g_reg)
            .unwrap();

        // Count contributing pixels by pooling an indicator on that channel.
        let mut probe = banks.clone();
        probe.cls_maps = Tensor::filled(&probe.cls_maps.shape, 1.0);
        let pooled = mlps_roi_pool(&probe, &roi, 16).unwrap();
        assert_eq!(pooled.cls[target], 1.0);

        let nonzero: Vec<f64> = g_cls
            .data
            .iter()
            .cloned()
            .filter(|&v| v != 0.0)
            .collect();
        assert!(!nonzero.is_empty());
        let first = nonzero[0];
        assert!(nonzero.iter().all(|&v| (v - first).abs() < 1e-15));
        let total: f64 = g_cls.data.iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "shares sum to the bin gradient");
        assert!(g_reg.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = Lcg64::new(2718);
        let k = 3;
        let classes = 3;
        let banks = PsBanks::<f64> {
            k,
            classes,
            cls_maps: Tensor::from_fn(&[1, k * k * classes, 6, 6], |_| rng.uniform(-0.5, 0.5)),
            reg_maps: Tensor::from_fn(&[1, 4 * k * k, 6, 6], |_| rng.uniform(-0.5, 0.5)),
        };
        let rois = [
            RoiSample {
                bbox: BBox::new(5.0, 9.0, 70.0, 66.0),
                label: 2,
                target: [0.1, -0.2, 0.3, 0.05],
            },
            RoiSample {
                bbox: BBox::new(30.0, 20.0, 90.0, 95.0),
                label: 0,
                target: [0.0; 4],
            },
            RoiSample {
                bbox: BBox::new(-8.0, 14.0, 40.0, 60.0),
                label: 1,
                target: [-0.4, 0.6, 0.0, 0.2],
            },
        ];
        for rule in [VoteRule::Sum, VoteRule::Mean] {
            let out = roi_loss(&banks, &rois, 16, 1.0, rule).unwrap();
            let eps = 1e-6;
            for (which, grad) in [("cls", &out.grad_cls_maps), ("reg", &out.grad_reg_maps)] {
                for i in 0..grad.numel() {
                    let mut plus = banks.clone();
                    let mut minus = banks.clone();
                    if which == "cls" {
                        plus.cls_maps.data[i] += eps;
                        minus.cls_maps.data[i] -= eps;
                    } else {
                        plus.reg_maps.data[i] += eps;
                        minus.reg_maps.data[i] -= eps;
                    }
                    let lp = roi_loss(&plus, &rois, 16, 1.0, rule).unwrap().total;
                    let lm = roi_loss(&minus, &rois, 16, 1.0, rule).unwrap().total;
                    let numeric = (lp - lm) / (2.0 * eps);
                    assert!(
                        (numeric - grad.data[i]).abs() < 1e-7,
                        "{rule:?} {which}[{i}]: numeric {numeric} vs analytic {}",
                        grad.data[i]
                    );
                }
            }
        }
    }
}
