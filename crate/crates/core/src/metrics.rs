//! Image-level detection quality metrics.
//!
//! An image is judged as a whole: the detector either flags it as containing
//! a fault (at least one detection above the confidence threshold) or passes
//! it as normal. Crossing that prediction with the ground-truth fault flag
//! yields one of four [`Verdict`]s per image, and a test set of verdicts
//! rolls up into an [`EvalReport`] of correct-detection, missed-detection,
//! and false-detection rates. The three rates are computed from integer
//! counts over a common denominator, so `cdr + mdr + fdr == 1` holds exactly
//! in floating point whenever the denominator divides the counts exactly,
//! and the underlying integer identity holds always.
//!
//! Also houses the illumination-robustness diagnostic: cosine similarity of
//! early/mid/late backbone activation maps under brightness rescaling.

use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, SnapshotTap};
use crate::detector::Detection;
use crate::error::{Error, Result};
use crate::synth::{augment_illumination, Annotation};
use crate::tensor::{Elem, Tensor};

/// Outcome of comparing an image-level prediction with its ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Fault image, flagged as faulty.
    CorrectFault,
    /// Normal image, passed as normal.
    CorrectNormal,
    /// Fault image, passed as normal.
    Missed,
    /// Normal image, flagged as faulty.
    FalseAlarm,
}

/// Judges one image: predicted faulty iff any detection survived the
/// confidence threshold, ground-truth faulty iff the annotation carries at
/// least one faulted object.
pub fn image_verdict(detections: &[Detection], annotation: &Annotation) -> Verdict {
    let predicted = !detections.is_empty();
    let actual = annotation.has_fault();
    match (actual, predicted) {
        (true, true) => Verdict::CorrectFault,
        (false, false) => Verdict::CorrectNormal,
        (true, false) => Verdict::Missed,
        (false, true) => Verdict::FalseAlarm,
    }
}

/// Per-dataset image-level rates with the integer counts behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Number of ground-truth fault images.
    pub fault_images: u64,
    /// Number of ground-truth normal images.
    pub normal_images: u64,
    pub correct_fault: u64,
    pub correct_normal: u64,
    pub missed: u64,
    pub false_alarm: u64,
    /// (correct_fault + correct_normal) / total.
    pub cdr: f64,
    /// missed / total.
    pub mdr: f64,
    /// false_alarm / total.
    pub fdr: f64,
}

impl EvalReport {
    /// Builds a report straight from the four counts.
    ///
    /// The denominator is the total image count; the numerators partition it,
    /// so the three rates sum to one as an integer identity.
    pub fn from_counts(
        correct_fault: u64,
        correct_normal: u64,
        missed: u64,
        false_alarm: u64,
    ) -> Result<EvalReport> {
        let total = correct_fault + correct_normal + missed + false_alarm;
        if total == 0 {
            return Err(Error::config("cannot evaluate an empty image set"));
        }
        let t = total as f64;
        Ok(EvalReport {
            fault_images: correct_fault + missed,
            normal_images: correct_normal + false_alarm,
            correct_fault,
            correct_normal,
            missed,
            false_alarm,
            cdr: (correct_fault + correct_normal) as f64 / t,
            mdr: missed as f64 / t,
            fdr: false_alarm as f64 / t,
        })
    }

    /// Total number of images behind this report.
    pub fn total(&self) -> u64 {
        self.fault_images + self.normal_images
    }

    /// The exact identity the three rates are built on:
    /// correct + missed + false alarms partition the image set.
    pub fn counts_partition(&self) -> bool {
        self.correct_fault + self.correct_normal + self.missed + self.false_alarm == self.total()
            && self.fault_images == self.correct_fault + self.missed
            && self.normal_images == self.correct_normal + self.false_alarm
    }
}

/// Three published rate rows kept as fixtures: (correct, missed,
/// false-alarm) counts per 10 000 images, paired with the percentage triple
/// each row printed. Every triple sums to 100.00, so the counts partition
/// the image set exactly.
pub const PUBLISHED_RATE_ROWS: [((u64, u64, u64), (f64, f64, f64)); 3] = [
    ((9860, 94, 46), (98.60, 0.94, 0.46)),
    ((9941, 37, 22), (99.41, 0.37, 0.22)),
    ((9332, 325, 343), (93.32, 3.25, 3.43)),
];

/// Rolls a verdict list into an [`EvalReport`]. At least one verdict is
/// required; rates over zero images are undefined.
pub fn evaluate(verdicts: &[Verdict]) -> Result<EvalReport> {
    let mut counts = [0u64; 4];
    for v in verdicts {
        let slot = match v {
            Verdict::CorrectFault => 0,
            Verdict::CorrectNormal => 1,
            Verdict::Missed => 2,
            Verdict::FalseAlarm => 3,
        };
        counts[slot] += 1;
    }
    EvalReport::from_counts(counts[0], counts[1], counts[2], counts[3])
}

/// Unweighted means of the three rates across datasets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanRates {
    pub mcdr: f64,
    pub mmdr: f64,
    pub mfdr: f64,
}

/// Averages per-dataset rates without weighting by dataset size.
pub fn aggregate(reports: &[EvalReport]) -> Result<MeanRates> {
    if reports.is_empty() {
        return Err(Error::config("cannot aggregate zero evaluation reports"));
    }
    let n = reports.len() as f64;
    Ok(MeanRates {
        mcdr: reports.iter().map(|r| r.cdr).sum::<f64>() / n,
        mmdr: reports.iter().map(|r| r.mdr).sum::<f64>() / n,
        mfdr: reports.iter().map(|r| r.fdr).sum::<f64>() / n,
    })
}

/// Renders named per-dataset reports plus their means as an aligned
/// plain-text table (rates in percent, two decimals).
pub fn render_eval_table(rows: &[(String, EvalReport)]) -> Result<String> {
    let reports: Vec<EvalReport> = rows.iter().map(|(_, r)| r.clone()).collect();
    let means = aggregate(&reports)?;
    let name_w = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain(["dataset".len(), "mean".len()])
        .max()
        .unwrap();
    let mut out = String::new();
    out.push_str(&format!(
        "{:name_w$}  {:>7}  {:>7}  {:>8}  {:>8}  {:>8}\n",
        "dataset", "images", "faults", "CDR(%)", "MDR(%)", "FDR(%)"
    ));
    for (name, r) in rows {
        out.push_str(&format!(
            "{:name_w$}  {:>7}  {:>7}  {:>8.2}  {:>8.2}  {:>8.2}\n",
            name,
            r.total(),
            r.fault_images,
            100.0 * r.cdr,
            100.0 * r.mdr,
            100.0 * r.fdr
        ));
    }
    out.push_str(&format!(
        "{:name_w$}  {:>7}  {:>7}  {:>8.2}  {:>8.2}  {:>8.2}\n",
        "mean",
        "",
        "",
        100.0 * means.mcdr,
        100.0 * means.mmdr,
        100.0 * means.mfdr
    ));
    Ok(out)
}

/// Backbone stages probed by the illumination diagnostic: the early, middle,
/// and late pooling outputs.
pub const ILLUMINATION_TAPS: [SnapshotTap; 3] =
    [SnapshotTap::Mp1, SnapshotTap::Mp3, SnapshotTap::Mp5];

/// Similarity of the probed activation maps for one brightness factor
/// against the unscaled image. `None` marks an undefined similarity
/// (a zero-norm activation map on either side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminationRow {
    pub alpha: f64,
    /// One entry per [`ILLUMINATION_TAPS`] stage, in order.
    pub similarity: [Option<f64>; 3],
}

fn cosine<E: Elem>(a: &Tensor<E>, b: &Tensor<E>) -> Option<f64> {
    if a.data == b.data {
        // Identical maps (e.g. the unscaled image against itself) compare as
        // exactly 1 rather than through a rounded norm quotient.
        let any_nonzero = a.data.iter().any(|v| v.to_f64() != 0.0);
        return any_nonzero.then_some(1.0);
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.data.iter().zip(&b.data) {
        let (x, y) = (x.to_f64(), y.to_f64());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot / (na * nb).sqrt())
}

/// Runs the backbone on brightness-rescaled copies of `image` and reports,
/// per alpha, the cosine similarity of the channel-mean activation maps at
/// [`ILLUMINATION_TAPS`] against the alpha = 1 reference.
pub fn illumination_similarity<E: Elem>(
    backbone: &Backbone<E>,
    image: &Tensor<E>,
    alphas: &[f64],
) -> Result<Vec<IlluminationRow>> {
    for &a in alphas {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::config(format!(
                "illumination factors must be positive and finite, got {a}"
            )));
        }
    }
    let reference = backbone.feature_snapshots(image, &ILLUMINATION_TAPS)?;
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let scaled = augment_illumination(image, alpha);
        let snaps = backbone.feature_snapshots(&scaled, &ILLUMINATION_TAPS)?;
        let mut similarity = [None; 3];
        for (slot, ((_, reference_map), (_, map))) in
            reference.iter().zip(&snaps).enumerate()
        {
            similarity[slot] = cosine(reference_map, map);
        }
        rows.push(IlluminationRow { alpha, similarity });
    }
    Ok(rows)
}

/// Renders the illumination diagnostic as an aligned plain-text table.
pub fn render_illumination_table(rows: &[IlluminationRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>7}  {:>8}  {:>8}  {:>8}\n",
        "alpha",
        ILLUMINATION_TAPS[0].name(),
        ILLUMINATION_TAPS[1].name(),
        ILLUMINATION_TAPS[2].name()
    ));
    for row in rows {
        out.push_str(&format!("{:>7.3}", row.alpha));
        for s in &row.similarity {
            match s {
                Some(v) => out.push_str(&format!("  {v:>8.5}")),
                None => out.push_str(&format!("  {:>8}", "-")),
            }
        }
        out.push('\n');
    }
    out
}
