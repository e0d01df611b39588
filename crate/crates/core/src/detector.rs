//! The assembled fault detector: backbone taps, the two fusion blocks, the
//! proposal heads, and the position-sensitive scoring head, wired together
//! for inference (`detect`) and exposed piecewise for the training loop.
//!
//! Parameter namespace (used by checkpoints, gradients, and the optimizer):
//! `conv1.*` / `dsf2..dsf9.*` for the backbone, `mff1.*` / `mff2.*` for the
//! fusion blocks, `rpn.*` for the proposal heads, and `psroi.*` for the
//! score-map head. Every name is unique; the trainable subset excludes the
//! normalization running statistics.

use std::collections::BTreeMap;
use std::path::Path;

use crate::backbone::{Backbone, BackboneCfg, BackboneTrace, Features};
use crate::checkpoint;
use crate::error::{Error, Result};
use crate::fusion::{FusionCfg, Mff1, Mff1Trace, Mff2, Mff2Trace};
use crate::mlps::{mlps_roi_pool, regress_roi, vote_and_score, PsHead, VoteRule};
use crate::params::Grads;
use crate::rng::Lcg64;
use crate::rpn::{
    decode_box, generate_anchors, nms, propose, AnchorCfg, BBox, RpnHeads, FEATURE_STRIDE,
    INFER_POST_NMS, INFER_PRE_NMS, PROPOSAL_NMS_IOU,
};
use crate::tensor::{Elem, Tensor};

/// Default confidence cut for emitting a detection.
pub const DETECT_SCORE_THRESHOLD: f64 = 0.9;

/// Default per-class suppression overlap for final detections.
pub const DETECT_NMS_IOU: f64 = 0.3;

/// One detected fault region. `class` indexes the foreground classes from 1
/// (0 is background and is never emitted).
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class: usize,
    pub score: f64,
    pub bbox: BBox,
}

/// Complete model configuration.
#[derive(Debug, Clone)]
pub struct DetectorCfg {
    pub backbone: BackboneCfg,
    pub fusion: FusionCfg,
    pub anchors: AnchorCfg,
    /// Class count including background (class 0).
    pub classes: usize,
    /// Pooling grid side length.
    pub ps_grid: usize,
    pub vote: VoteRule,
}

impl DetectorCfg {
    /// Published-width configuration (backbone classifier dropped).
    pub fn full(classes: usize) -> Self {
        let mut backbone = BackboneCfg::table();
        backbone.classifier_classes = None;
        DetectorCfg {
            backbone,
            fusion: FusionCfg::full(),
            anchors: AnchorCfg::standard(),
            classes,
            ps_grid: crate::mlps::PS_GRID,
            vote: VoteRule::Sum,
        }
    }

    /// Width-reduced configuration for CPU-scale experiments; the layout
    /// (strides, taps, fusion structure, 7x7 pooling grid) is unchanged.
    /// Anchor scales match the synthetic parts (roughly 28-92 px). The full
    /// grid is kept because summing 49 bin votes is what lets the narrow
    /// head climb away from its near-uniform starting point.
    pub fn desk(classes: usize) -> Self {
        DetectorCfg {
            backbone: BackboneCfg::toy(4),
            fusion: FusionCfg::toy(2),
            anchors: AnchorCfg::with_scales(&[32.0, 56.0, 96.0]),
            classes,
            ps_grid: 7,
            vote: VoteRule::Sum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.fusion.validate()?;
        self.anchors.validate()?;
        if self.classes < 2 {
            return Err(Error::config(
                "need at least one foreground class plus background",
            ));
        }
        if self.ps_grid == 0 {
            return Err(Error::config("pooling grid must be non-empty"));
        }
        Ok(())
    }
}

/// Everything recorded by a training-mode forward pass, for the backward
/// walk.
pub struct DetectorTrace<E: Elem> {
    pub feats: Features<E>,
    pub backbone: BackboneTrace<E>,
    pub mff1_map: Tensor<E>,
    pub mff1: Mff1Trace<E>,
    pub mff2_map: Tensor<E>,
    pub mff2: Mff2Trace<E>,
}

#[derive(Debug, Clone)]
pub struct Detector<E: Elem = f32> {
    pub cfg: DetectorCfg,
    pub backbone: Backbone<E>,
    pub mff1: Mff1<E>,
    pub mff2: Mff2<E>,
    pub rpn: RpnHeads<E>,
    pub ps: PsHead<E>,
}

impl<E: Elem> Detector<E> {
    pub fn new(cfg: DetectorCfg, rng: &mut Lcg64) -> Result<Self> {
        cfg.validate()?;
        let backbone = Backbone::new(cfg.backbone.clone(), rng)?;
        let taps = cfg.backbone.tap_channels();
        let mff1 = Mff1::new(rng, &cfg.fusion, taps)?;
        let mff2 = Mff2::new(rng, &cfg.fusion, taps)?;
        let rpn = RpnHeads::new(cfg.fusion.mff1_out, cfg.anchors.anchors_per_cell(), rng);
        let ps = PsHead::new(cfg.fusion.mff2_out, cfg.classes, cfg.ps_grid, rng)?;
        Ok(Detector {
            cfg,
            backbone,
            mff1,
            mff2,
            rpn,
            ps,
        })
    }

    /// Inference forward to the two fused maps.
    pub fn forward_maps(&self, image: &Tensor<E>) -> Result<(Tensor<E>, Tensor<E>)> {
        let feats = self.backbone.forward_features(image)?;
        Ok((self.mff1.forward_infer(&feats)?, self.mff2.forward_infer(&feats)?))
    }

    /// Training-mode forward (batch statistics, running-average updates),
    /// returning both fused maps' traces for [`Detector::backward`].
    pub fn forward_train(&mut self, image: &Tensor<E>) -> Result<DetectorTrace<E>> {
        let (feats, backbone) = self.backbone.forward_features_train(image)?;
        let (mff1_map, mff1) = self.mff1.forward_train(&feats)?;
        let (mff2_map, mff2) = self.mff2.forward_train(&feats)?;
        Ok(DetectorTrace {
            feats,
            backbone,
            mff1_map,
            mff1,
            mff2_map,
            mff2,
        })
    }

    /// Reverse walk from gradients on the two fused maps down to every
    /// parameter. The proposal-head and score-head gradients are pushed in
    /// by the caller (they own the losses); this routine handles fusion and
    /// backbone.
    pub fn backward(
        &self,
        trace: &DetectorTrace<E>,
        grad_mff1: &Tensor<E>,
        grad_mff2: &Tensor<E>,
        grads: &mut Grads<E>,
    ) -> Result<()> {
        let mut taps = self.mff1.backward(&trace.mff1, grad_mff1, &trace.feats, grads)?;
        let t2 = self.mff2.backward(&trace.mff2, grad_mff2, &trace.feats, grads)?;
        taps.add_assign(&t2);
        self.backbone
            .backward_features(&trace.backbone, &taps.dsf4, &taps.dsf7, &taps.dsf9, grads)?;
        Ok(())
    }

    /// Full detection pipeline: taps, fusion, proposals, per-proposal
    /// position-sensitive scoring and refinement, confidence cut, then
    /// per-class suppression. Deterministic for fixed inputs.
    pub fn detect(
        &self,
        image: &Tensor<E>,
        threshold: f64,
        nms_iou: f64,
    ) -> Result<Vec<Detection>> {
        let (_, _, ih, iw) = image.dims4()?;
        let (iw, ih) = (iw as f64, ih as f64);
        let feats = self.backbone.forward_features(image)?;
        let m1 = self.mff1.forward_infer(&feats)?;
        let m2 = self.mff2.forward_infer(&feats)?;
        let (obj, del) = self.rpn.forward(&m1)?;
        let (_, _, fh, fw) = m1.dims4()?;
        let grid = generate_anchors(fh, fw, &self.cfg.anchors)?;
        let proposals = propose(
            &obj,
            &del,
            &grid,
            iw,
            ih,
            INFER_PRE_NMS,
            PROPOSAL_NMS_IOU,
            INFER_POST_NMS,
        )?;
        let banks = self.ps.forward(&m2)?;

        let mut raw: Vec<Detection> = Vec::new();
        for p in &proposals {
            let pooled = mlps_roi_pool(&banks, &p.bbox, FEATURE_STRIDE)?;
            let (_, s) = vote_and_score(&pooled, self.cfg.vote);
            let (best, best_score) = s
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(i, &v)| (i, v))
                .expect("at least two classes");
            if best == 0 || best_score < threshold {
                continue;
            }
            let refined = decode_box(&p.bbox, &regress_roi(&pooled))?;
            if let Some(clipped) = refined.clipped(iw, ih) {
                raw.push(Detection {
                    class: best,
                    score: best_score,
                    bbox: clipped,
                });
            }
        }

        let mut out: Vec<Detection> = Vec::new();
        for c in 1..self.cfg.classes {
            let idx: Vec<usize> = (0..raw.len()).filter(|&i| raw[i].class == c).collect();
            if idx.is_empty() {
                continue;
            }
            let boxes: Vec<BBox> = idx.iter().map(|&i| raw[i].bbox).collect();
            let scores: Vec<f64> = idx.iter().map(|&i| raw[i].score).collect();
            for k in nms(&boxes, &scores, nms_iou) {
                out.push(raw[idx[k]].clone());
            }
        }
        out.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
        Ok(out)
    }

    /// [`Detector::detect`] with the default confidence and suppression
    /// settings.
    pub fn detect_default(&self, image: &Tensor<E>) -> Result<Vec<Detection>> {
        self.detect(image, DETECT_SCORE_THRESHOLD, DETECT_NMS_IOU)
    }

    pub fn collect<'a>(&'a self, out: &mut Vec<(String, &'a Tensor<E>)>) {
        self.backbone.collect("", out);
        self.mff1.collect(out);
        self.mff2.collect(out);
        self.rpn.collect("rpn", out);
        self.ps.collect("psroi", out);
    }

    pub fn collect_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Tensor<E>)>) {
        self.backbone.collect_mut("", out);
        self.mff1.collect_mut(out);
        self.mff2.collect_mut(out);
        self.rpn.collect_mut("rpn", out);
        self.ps.collect_mut("psroi", out);
    }

    pub fn collect_trainable_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Tensor<E>)>) {
        self.backbone.collect_trainable_mut("", out);
        self.mff1.collect_trainable_mut(out);
        self.mff2.collect_trainable_mut(out);
        self.rpn.collect_trainable_mut("rpn", out);
        self.ps.collect_trainable_mut("psroi", out);
    }

    /// All parameters (including running statistics) as a name-keyed map in
    /// single precision, the checkpoint payload type.
    pub fn parameter_map(&self) -> BTreeMap<String, Tensor<f32>> {
        let mut entries = Vec::new();
        self.collect(&mut entries);
        entries
            .into_iter()
            .map(|(name, t)| (name, t.cast::<f32>()))
            .collect()
    }

    /// Loads a full parameter map. Every model parameter must be present
    /// with a matching shape, and the map must not carry unknown names.
    pub fn load_parameter_map(&mut self, map: &BTreeMap<String, Tensor<f32>>) -> Result<()> {
        let model_names: Vec<String> = {
            let mut entries = Vec::new();
            self.collect(&mut entries);
            entries.into_iter().map(|(n, _)| n).collect()
        };
        let missing: Vec<&str> = model_names
            .iter()
            .filter(|n| !map.contains_key(*n))
            .map(|n| n.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::checkpoint(format!(
                "checkpoint is missing parameters: {}",
                missing.join(", ")
            )));
        }
        let unknown: Vec<&str> = map
            .keys()
            .filter(|k| !model_names.contains(k))
            .map(|k| k.as_str())
            .collect();
        if !unknown.is_empty() {
            return Err(Error::checkpoint(format!(
                "checkpoint carries unknown parameters: {}",
                unknown.join(", ")
            )));
        }
        let mut slots = Vec::new();
        self.collect_mut(&mut slots);
        for (name, slot) in slots {
            let t = &map[&name];
            if t.shape != slot.shape {
                return Err(Error::checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    t.shape, slot.shape
                )));
            }
            *slot = t.cast::<E>();
        }
        Ok(())
    }

    /// Loads only the backbone subset from a (possibly larger) checkpoint,
    /// e.g. classifier-pretrained weights. Names the missing parameters on
    /// mismatch; extra checkpoint entries are ignored.
    pub fn load_backbone_map(&mut self, map: &BTreeMap<String, Tensor<f32>>) -> Result<()> {
        let mut slots = Vec::new();
        self.backbone.collect_mut("", &mut slots);
        let mut missing = Vec::new();
        for (name, slot) in slots {
            match map.get(&name) {
                None => missing.push(name),
                Some(t) => {
                    if t.shape != slot.shape {
                        return Err(Error::checkpoint(format!(
                            "backbone parameter {name} has shape {:?}, expected {:?}",
                            t.shape, slot.shape
                        )));
                    }
                    *slot = t.cast::<E>();
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::checkpoint(format!(
                "checkpoint does not cover the backbone; missing: {}",
                missing.join(", ")
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.parameter_map())
    }

    pub fn load_from(&mut self, path: &Path) -> Result<()> {
        let map = checkpoint::load(path)?;
        self.load_parameter_map(&map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn tiny_cfg() -> DetectorCfg {
        DetectorCfg {
            backbone: BackboneCfg::toy(16),
            fusion: FusionCfg::toy(16),
            anchors: AnchorCfg::with_scales(&[12.0, 24.0, 40.0]),
            classes: 3,
            ps_grid: 7,
            vote: VoteRule::Sum,
        }
    }

    #[test]
    fn parameter_names_are_unique_and_cover_every_stage() {
        let mut rng = Lcg64::new(1);
        let det: Detector = Detector::new(tiny_cfg(), &mut rng).unwrap();
        let mut entries = Vec::new();
        det.collect(&mut entries);
        let names: BTreeSet<&str> = entries.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names.len(), entries.len(), "duplicate parameter name");
        for prefix in ["conv1.", "dsf2.", "dsf9.", "mff1.", "mff2.", "rpn.", "psroi."] {
            assert!(
                names.iter().any(|n| n.starts_with(prefix)),
                "no parameters under {prefix}"
            );
        }
        // The trainable set is a strict subset (running stats excluded).
        let mut det2: Detector = Detector::new(tiny_cfg(), &mut Lcg64::new(1)).unwrap();
        let mut trainable = Vec::new();
        det2.collect_trainable_mut(&mut trainable);
        assert!(trainable.len() < entries.len());
        for (name, _) in &trainable {
            assert!(names.contains(name.as_str()), "trainable {name} not collected");
            assert!(!name.contains("running"), "running stat {name} marked trainable");
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_detection_output() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut rng = Lcg64::new(7);
        let det: Detector = Detector::new(tiny_cfg(), &mut rng).unwrap();
        let image = Tensor::from_fn(&[1, 3, 64, 64], |_| rng.uniform(0.0, 1.0) as f32);
        det.save(&path).unwrap();

        let mut twin: Detector = Detector::new(tiny_cfg(), &mut Lcg64::new(999)).unwrap();
        twin.load_from(&path).unwrap();
        // Low threshold so some boxes actually come out of the fresh net.
        let a = det.detect(&image, 0.2, 0.5).unwrap();
        let b = twin.detect(&image, 0.2, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn partial_checkpoints_are_rejected_with_names() {
        let mut rng = Lcg64::new(5);
        let det: Detector = Detector::new(tiny_cfg(), &mut rng).unwrap();
        let mut map = det.parameter_map();
        map.remove("rpn.cls.weight");
        let mut twin: Detector = Detector::new(tiny_cfg(), &mut Lcg64::new(6)).unwrap();
        let err = twin.load_parameter_map(&map).unwrap_err();
        assert!(err.to_string().contains("rpn.cls.weight"), "{err}");
    }

    #[test]
    fn backbone_subset_load_accepts_extra_entries() {
        let mut rng = Lcg64::new(5);
        let det: Detector = Detector::new(tiny_cfg(), &mut rng).unwrap();
        let map = det.parameter_map(); // full map = backbone + heads
        let mut twin: Detector = Detector::new(tiny_cfg(), &mut Lcg64::new(6)).unwrap();
        twin.load_backbone_map(&map).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        det.backbone.collect("", &mut a);
        twin.backbone.collect("", &mut b);
        for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
            assert_eq!(x.data, y.data);
        }
        // But the proposal heads were not loaded.
        assert_ne!(det.rpn.cls_weight.data, twin.rpn.cls_weight.data);

        let mut bad = map.clone();
        bad.remove("conv1.weight");
        let err = twin.load_backbone_map(&bad).unwrap_err();
        assert!(err.to_string().contains("conv1.weight"), "{err}");
    }

    #[test]
    fn detect_is_deterministic_and_respects_the_threshold() {
        let mut rng = Lcg64::new(42);
        let det: Detector = Detector::new(tiny_cfg(), &mut rng).unwrap();
        let image = Tensor::from_fn(&[1, 3, 64, 64], |_| rng.uniform(0.0, 1.0) as f32);
        let a = det.detect(&image, 0.0, 0.5).unwrap();
        let b = det.detect(&image, 0.0, 0.5).unwrap();
        assert_eq!(a, b);
        for d in &a {
            assert!(d.class >= 1 && d.class < 3);
            assert!(d.bbox.is_proper());
            assert!(d.bbox.inside_image(64.0, 64.0));
        }
        for pair in a.windows(2) {
            assert!(pair[0].score >= pair[1].score);
        }
        // An untrained net near 1/3-1/3-1/3 softmax cannot clear 0.9.
        let high = det.detect(&image, 0.9, 0.5).unwrap();
        assert!(high.is_empty());
    }

    #[test]
    fn fused_map_shapes_follow_the_config() {
        let mut rng = Lcg64::new(2);
        let det: Detector = Detector::new(tiny_cfg(), &mut rng).unwrap();
        let image = Tensor::from_fn(&[1, 3, 64, 64], |_| rng.uniform(0.0, 1.0) as f32);
        let (m1, m2) = det.forward_maps(&image).unwrap();
        let cfg = tiny_cfg();
        assert_eq!(m1.shape, vec![1, cfg.fusion.mff1_out, 4, 4]);
        assert_eq!(m2.shape, vec![1, cfg.fusion.mff2_out, 4, 4]);
    }
}
