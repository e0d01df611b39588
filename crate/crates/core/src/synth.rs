//! Deterministic synthetic scene generator for freight-part fault
//! detection: dark textured backgrounds, six geometric part templates, and
//! per-part fault modes (a missing or displaced sub-part).
//!
//! Generation is split into planning and rendering. `plan_scene` draws every
//! random choice for a `(seed, index)` pair into a [`ScenePlan`];
//! `render_scene` turns a plan into pixels with no randomness of its own
//! beyond the plan's recorded noise stream. Because a plan's fault-free
//! counterpart differs only in how the faulted sub-parts are drawn, the two
//! renders differ only inside those sub-parts' pixel regions — a property
//! the localization tests lean on.

use std::io::{BufRead, BufReader, Read, Write as IoWrite};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Lcg64;
use crate::rpn::{iou, BBox};
use crate::tensor::{Elem, Tensor};

/// The closed set of part classes, in label order; detection class `i + 1`
/// is `CLASS_NAMES[i]` (0 is background).
pub const CLASS_NAMES: [&str; 6] = [
    "block_key",
    "bolt_head",
    "cock_handle",
    "dust_collector",
    "fastening_bracket",
    "valve_handle",
];

/// 1-based detection class for a part name.
pub fn class_index(name: &str) -> Option<usize> {
    CLASS_NAMES.iter().position(|&c| c == name).map(|i| i + 1)
}

/// Smallest drawn part side and the image margin parts keep clear.
const MIN_PART: usize = 28;
const MAX_PART: usize = 92;
const MARGIN: usize = 6;

// ---------------------------------------------------------------------------
// Spec and plan
// ---------------------------------------------------------------------------

/// Everything the generator needs; a pure function of this and an index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub min_parts: usize,
    pub max_parts: usize,
    /// Probability that any given part is rendered with a fault.
    pub fault_probability: f64,
    /// Illumination multiplier range sampled per scene.
    pub illumination: (f64, f64),
    /// Peak amplitude of the per-pixel brightness noise.
    pub noise: f64,
    /// Background base-gray range.
    pub background: (f64, f64),
    /// Background ripple amplitude.
    pub texture_amp: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// CPU-scale default: 256x256 scenes, one to three parts, even odds of
    /// a fault per part.
    pub fn desk(seed: u64) -> Self {
        SceneSpec {
            width: 256,
            height: 256,
            min_parts: 1,
            max_parts: 3,
            fault_probability: 0.5,
            illumination: (0.85, 1.15),
            noise: 0.02,
            background: (0.10, 0.22),
            texture_amp: 0.025,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let needed = MAX_PART + 2 * MARGIN;
        if self.width < needed || self.height < needed {
            return Err(Error::config(format!(
                "image {}x{} cannot hold a {MAX_PART}px part template with margins",
                self.width, self.height
            )));
        }
        if self.min_parts == 0 || self.max_parts < self.min_parts {
            return Err(Error::config("part count range must be 1 <= min <= max"));
        }
        if !(0.0..=1.0).contains(&self.fault_probability) {
            return Err(Error::config("fault probability must lie in [0, 1]"));
        }
        let (lo, hi) = self.illumination;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::config("illumination range must be positive and ordered"));
        }
        if self.noise < 0.0 || self.texture_amp < 0.0 {
            return Err(Error::config("noise amplitudes must be non-negative"));
        }
        let (b0, b1) = self.background;
        if !(0.0 <= b0 && b0 <= b1 && b1 <= 1.0) {
            return Err(Error::config("background range must be ordered within [0, 1]"));
        }
        Ok(())
    }
}

/// How a faulted part deviates from its healthy template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FaultKind {
    /// The sub-part is absent.
    Missing,
    /// The sub-part sits offset from its seat by whole pixels.
    Displaced { dx: i32, dy: i32 },
}

/// One planned part instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartPlan {
    /// Index into [`CLASS_NAMES`].
    pub kind: usize,
    /// Part rectangle in pixels (top-left corner plus size).
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub body_shade: [f32; 2],
    pub sub_shade: f32,
    pub fault: Option<FaultKind>,
}

impl PartPlan {
    pub fn bbox(&self) -> BBox {
        BBox::new(
            self.x as f64,
            self.y as f64,
            (self.x + self.w) as f64,
            (self.y + self.h) as f64,
        )
    }

    /// Pixel region that can differ between this part and its fault-free
    /// counterpart: the sub-part's seat joined with its displaced position.
    pub fn changed_region(&self) -> Option<BBox> {
        let fault = self.fault?;
        let seat = sub_primitive(self.kind, self.rect()).bounds();
        Some(match fault {
            FaultKind::Missing => seat,
            FaultKind::Displaced { dx, dy } => {
                let moved = sub_primitive(self.kind, self.rect()).shifted(dx, dy).bounds();
                BBox::new(
                    seat.x1.min(moved.x1),
                    seat.y1.min(moved.y1),
                    seat.x2.max(moved.x2),
                    seat.y2.max(moved.y2),
                )
            }
        })
    }

    fn rect(&self) -> Rect {
        Rect {
            x: self.x as i64,
            y: self.y as i64,
            w: self.w as i64,
            h: self.h as i64,
        }
    }
}

/// A fully planned scene; rendering consumes no randomness beyond
/// `noise_seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenePlan {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub base_gray: f64,
    pub grad: (f64, f64),
    pub tint: [f64; 3],
    pub texture_amp: f64,
    pub texture_phase: f64,
    pub alpha: f64,
    pub noise: f64,
    pub noise_seed: u64,
    pub parts: Vec<PartPlan>,
}

impl ScenePlan {
    /// The same scene with every fault removed (healthy counterpart).
    pub fn without_faults(&self) -> ScenePlan {
        let mut plan = self.clone();
        for p in &mut plan.parts {
            p.fault = None;
        }
        plan
    }
}

/// Draws every random decision for scene `index` of `spec`.
pub fn plan_scene(spec: &SceneSpec, index: usize) -> Result<ScenePlan> {
    spec.validate()?;
    let mut rng = Lcg64::new(spec.seed).substream(index as u64);
    let n_parts = spec.min_parts + rng.below(spec.max_parts - spec.min_parts + 1);

    let mut parts: Vec<PartPlan> = Vec::new();
    for _ in 0..n_parts {
        let kind = rng.below(CLASS_NAMES.len());
        let side = MIN_PART as f64 + rng.uniform(0.0, (MAX_PART - MIN_PART - 16) as f64);
        let aspect = match kind {
            0 => rng.uniform(0.60, 0.80),          // tall key plate
            2 => rng.uniform(1.35, 1.70),          // wide handle
            _ => rng.uniform(0.85, 1.20),
        };
        let w = ((side * aspect.sqrt()).round() as usize).clamp(MIN_PART, MAX_PART);
        let h = ((side / aspect.sqrt()).round() as usize).clamp(MIN_PART, MAX_PART);

        // Rejection placement; give up on a crowded canvas.
        let mut placed = None;
        for _ in 0..40 {
            let x = MARGIN + rng.below(spec.width - w - 2 * MARGIN + 1);
            let y = MARGIN + rng.below(spec.height - h - 2 * MARGIN + 1);
            let cand = BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64);
            if parts.iter().all(|p| iou(&p.bbox(), &cand) < 0.02) {
                placed = Some((x, y));
                break;
            }
        }
        let Some((x, y)) = placed else { continue };

        let fault = if rng.chance(spec.fault_probability) {
            if rng.chance(0.5) {
                Some(FaultKind::Missing)
            } else {
                // Keep the displaced sub-part inside the part rectangle:
                // seats occupy the central zone, so a fifth of the size is
                // always safe. Force a visible minimum offset.
                let span_x = (w as i32 / 5).max(3);
                let span_y = (h as i32 / 5).max(3);
                let draw = |rng: &mut Lcg64, span: i32| -> i32 {
                    let mag = 2 + rng.below((span - 2).max(1) as usize) as i32;
                    if rng.chance(0.5) {
                        mag
                    } else {
                        -mag
                    }
                };
                Some(FaultKind::Displaced {
                    dx: draw(&mut rng, span_x),
                    dy: draw(&mut rng, span_y),
                })
            }
        } else {
            None
        };

        let body = rng.uniform(0.52, 0.72) as f32;
        let accent = (body as f64 - rng.uniform(0.12, 0.20)) as f32;
        // Sub-parts contrast hard against the body, bright or dark.
        let sub = if rng.chance(0.5) {
            (body as f64 + rng.uniform(0.18, 0.26)).min(0.98) as f32
        } else {
            (body as f64 - rng.uniform(0.28, 0.36)).max(0.05) as f32
        };

        parts.push(PartPlan {
            kind,
            x,
            y,
            w,
            h,
            body_shade: [body, accent],
            sub_shade: sub,
            fault,
        });
    }
    if parts.is_empty() {
        // First placement cannot fail on an empty canvas, so this would be
        // a spec/logic inconsistency.
        return Err(Error::config("no part fit the scene"));
    }

    Ok(ScenePlan {
        id: format!("scene{index:05}"),
        width: spec.width,
        height: spec.height,
        base_gray: rng.uniform(spec.background.0, spec.background.1),
        grad: (rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06)),
        tint: [
            rng.uniform(-0.015, 0.015),
            rng.uniform(-0.015, 0.015),
            rng.uniform(-0.015, 0.015),
        ],
        texture_amp: spec.texture_amp,
        texture_phase: rng.uniform(0.0, std::f64::consts::TAU),
        alpha: rng.uniform(spec.illumination.0, spec.illumination.1),
        noise: spec.noise,
        noise_seed: rng.next_u64(),
        parts,
    })
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Rect {
    x: i64,
    y: i64,
    w: i64,
    h: i64,
}

#[derive(Debug, Clone, Copy)]
enum Prim {
    Rect { x1: i64, y1: i64, x2: i64, y2: i64 },
    Disc { cx: f64, cy: f64, r: f64 },
}

impl Prim {
    fn shifted(self, dx: i32, dy: i32) -> Prim {
        match self {
            Prim::Rect { x1, y1, x2, y2 } => Prim::Rect {
                x1: x1 + dx as i64,
                y1: y1 + dy as i64,
                x2: x2 + dx as i64,
                y2: y2 + dy as i64,
            },
            Prim::Disc { cx, cy, r } => Prim::Disc {
                cx: cx + dx as f64,
                cy: cy + dy as f64,
                r,
            },
        }
    }

    fn bounds(&self) -> BBox {
        match *self {
            Prim::Rect { x1, y1, x2, y2 } => {
                BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64)
            }
            Prim::Disc { cx, cy, r } => BBox::new(
                (cx - r).floor(),
                (cy - r).floor(),
                (cx + r).ceil(),
                (cy + r).ceil(),
            ),
        }
    }

    fn covers(&self, x: usize, y: usize) -> bool {
        match *self {
            Prim::Rect { x1, y1, x2, y2 } => {
                (x as i64) >= x1 && (x as i64) < x2 && (y as i64) >= y1 && (y as i64) < y2
            }
            Prim::Disc { cx, cy, r } => {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                dx * dx + dy * dy <= r * r
            }
        }
    }
}

fn frac_rect(r: Rect, fx1: f64, fy1: f64, fx2: f64, fy2: f64) -> Prim {
    Prim::Rect {
        x1: r.x + (fx1 * r.w as f64).round() as i64,
        y1: r.y + (fy1 * r.h as f64).round() as i64,
        x2: r.x + (fx2 * r.w as f64).round() as i64,
        y2: r.y + (fy2 * r.h as f64).round() as i64,
    }
}

fn centered_disc(r: Rect, radius_frac: f64) -> Prim {
    Prim::Disc {
        cx: r.x as f64 + r.w as f64 / 2.0,
        cy: r.y as f64 + r.h as f64 / 2.0,
        r: radius_frac * r.w.min(r.h) as f64,
    }
}

/// Body silhouette of a template, as `(primitive, shade index)` pairs in
/// draw order. Shade 0 is the main body tone, shade 1 the accent tone.
fn body_primitives(kind: usize, r: Rect) -> Vec<(Prim, usize)> {
    match kind {
        // Block key: full plate with an accent groove down the middle.
        0 => vec![
            (frac_rect(r, 0.0, 0.0, 1.0, 1.0), 0),
            (frac_rect(r, 0.42, 0.0, 0.58, 1.0), 1),
        ],
        // Bolt head: large disc on a thin square flange.
        1 => vec![
            (frac_rect(r, 0.08, 0.08, 0.92, 0.92), 1),
            (centered_disc(r, 0.46), 0),
        ],
        // Cock handle: horizontal bar with end caps.
        2 => vec![
            (frac_rect(r, 0.0, 0.34, 1.0, 0.66), 0),
            (frac_rect(r, 0.0, 0.18, 0.12, 0.82), 1),
            (frac_rect(r, 0.88, 0.18, 1.0, 0.82), 1),
        ],
        // Dust collector: dome over a full-width base.
        3 => vec![
            (frac_rect(r, 0.10, 0.55, 0.90, 1.0), 1),
            (Prim::Disc {
                cx: r.x as f64 + r.w as f64 / 2.0,
                cy: r.y as f64 + 0.38 * r.h as f64,
                r: 0.36 * r.w.min(r.h) as f64,
            }, 0),
        ],
        // Fastening bracket: a U of three bars.
        4 => vec![
            (frac_rect(r, 0.0, 0.0, 0.20, 1.0), 0),
            (frac_rect(r, 0.80, 0.0, 1.0, 1.0), 0),
            (frac_rect(r, 0.0, 0.78, 1.0, 1.0), 1),
        ],
        // Valve handle: rim disc with a recessed hub face.
        5 => vec![
            (centered_disc(r, 0.50), 0),
            (centered_disc(r, 0.34), 1),
        ],
        _ => unreachable!("unknown template"),
    }
}

/// The removable/displaceable sub-part, seated in the central zone so any
/// in-range displacement stays inside the part rectangle.
fn sub_primitive(kind: usize, r: Rect) -> Prim {
    match kind {
        0 => frac_rect(r, 0.30, 0.36, 0.70, 0.64), // key block across the groove
        1 => centered_disc(r, 0.20),               // nut
        2 => frac_rect(r, 0.42, 0.16, 0.58, 0.84), // vertical lever
        3 => centered_disc(r, 0.16),               // inlet cap
        4 => frac_rect(r, 0.32, 0.30, 0.68, 0.66), // clamped block
        5 => frac_rect(r, 0.22, 0.44, 0.78, 0.56), // spoke
        _ => unreachable!("unknown template"),
    }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Annotation of one rendered scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub w: usize,
    pub h: usize,
    pub objects: Vec<ObjectAnn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnn {
    pub cls: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub fault: bool,
}

impl Annotation {
    pub fn has_fault(&self) -> bool {
        self.objects.iter().any(|o| o.fault)
    }

    /// Faulted objects as `(box, 1-based class)` — the detection targets.
    pub fn fault_boxes(&self) -> Vec<(BBox, usize)> {
        self.objects
            .iter()
            .filter(|o| o.fault)
            .map(|o| {
                let b = BBox::new(o.bbox[0], o.bbox[1], o.bbox[2], o.bbox[3]);
                (b, class_index(&o.cls).expect("annotation class from the closed set"))
            })
            .collect()
    }
}

/// Renders a plan to a `(1, 3, H, W)` image in `[0, 1]` plus its
/// annotation. Deterministic: all randomness lives in the plan.
pub fn render_scene(plan: &ScenePlan) -> (Tensor<f32>, Annotation) {
    let (w, h) = (plan.width, plan.height);
    let mut image: Tensor<f32> = Tensor::zeros(&[1, 3, h, w]);

    // Background: gradient plus a diagonal ripple, slightly tinted.
    for y in 0..h {
        for x in 0..w {
            let ripple = plan.texture_amp
                * (0.31 * x as f64 + 0.23 * y as f64 + plan.texture_phase).sin();
            let v = plan.base_gray
                + plan.grad.0 * (x as f64 / w as f64)
                + plan.grad.1 * (y as f64 / h as f64)
                + ripple;
            for c in 0..3 {
                image.set4(0, c, y, x, (v + plan.tint[c]) as f32);
            }
        }
    }

    // Parts, painter's order.
    for part in &plan.parts {
        let r = part.rect();
        let paint = |image: &mut Tensor<f32>, prim: &Prim, shade: f32| {
            let b = prim.bounds();
            let x0 = (b.x1.max(0.0)) as usize;
            let y0 = (b.y1.max(0.0)) as usize;
            let x1 = (b.x2.min(w as f64)) as usize;
            let y1 = (b.y2.min(h as f64)) as usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    if prim.covers(x, y) {
                        for c in 0..3 {
                            image.set4(0, c, y, x, shade);
                        }
                    }
                }
            }
        };
        for (prim, tone) in body_primitives(part.kind, r) {
            paint(&mut image, &prim, part.body_shade[tone]);
        }
        match part.fault {
            Some(FaultKind::Missing) => {}
            Some(FaultKind::Displaced { dx, dy }) => {
                paint(&mut image, &sub_primitive(part.kind, r).shifted(dx, dy), part.sub_shade);
            }
            None => paint(&mut image, &sub_primitive(part.kind, r), part.sub_shade),
        }
    }

    // Brightness noise (one draw per pixel, shared by the channels) and
    // illumination, clamped into the unit range.
    let mut noise_rng = Lcg64::new(plan.noise_seed);
    for y in 0..h {
        for x in 0..w {
            let n = noise_rng.uniform(-plan.noise, plan.noise);
            for c in 0..3 {
                let v = (image.at4(0, c, y, x) as f64 + n) * plan.alpha;
                image.set4(0, c, y, x, v.clamp(0.0, 1.0) as f32);
            }
        }
    }

    let objects = plan
        .parts
        .iter()
        .map(|p| ObjectAnn {
            cls: CLASS_NAMES[p.kind].to_string(),
            bbox: [
                p.x as f64,
                p.y as f64,
                (p.x + p.w) as f64,
                (p.y + p.h) as f64,
            ],
            fault: p.fault.is_some(),
        })
        .collect();
    let ann = Annotation {
        id: plan.id.clone(),
        w,
        h,
        objects,
    };
    (image, ann)
}

/// Plans and renders scene `index` of `spec`.
pub fn generate_scene(spec: &SceneSpec, index: usize) -> Result<(Tensor<f32>, Annotation)> {
    Ok(render_scene(&plan_scene(spec, index)?))
}

/// Global illumination change: pixelwise `clamp(alpha * x, 0, 1)`.
pub fn augment_illumination<E: Elem>(image: &Tensor<E>, alpha: f64) -> Tensor<E> {
    image.map(|v| E::from_f64((v.to_f64() * alpha).clamp(0.0, 1.0)))
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Writes a `(1, 3, H, W)` unit-range image as binary 8-bit PPM.
pub fn write_ppm(path: &Path, image: &Tensor<f32>) -> Result<()> {
    let (n, c, h, w) = image.dims4()?;
    if n != 1 || c != 3 {
        return Err(Error::shape(format!(
            "PPM writer expects a (1, 3, H, W) image, got {:?}",
            image.shape
        )));
    }
    let mut bytes = Vec::with_capacity(32 + 3 * h * w);
    bytes.extend_from_slice(format!("P6\n{w} {h}\n255\n").as_bytes());
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                let v = image.at4(0, ch, y, x).clamp(0.0, 1.0);
                bytes.push((v * 255.0).round() as u8);
            }
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Reads a binary 8-bit PPM back into a unit-range `(1, 3, H, W)` tensor.
pub fn read_ppm(path: &Path) -> Result<Tensor<f32>> {
    let data = std::fs::read(path)?;
    let mut pos = 0usize;
    let mut token = |data: &[u8]| -> Result<String> {
        // Skip whitespace and '#' comment lines between header fields.
        loop {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::dataset("truncated PPM header".to_string()));
        }
        Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
    };
    let magic = token(&data)?;
    if magic != "P6" {
        return Err(Error::dataset(format!("not a binary PPM (magic {magic})")));
    }
    let w: usize = token(&data)?.parse().map_err(|_| Error::dataset("bad PPM width"))?;
    let h: usize = token(&data)?.parse().map_err(|_| Error::dataset("bad PPM height"))?;
    let maxval: usize = token(&data)?.parse().map_err(|_| Error::dataset("bad PPM maxval"))?;
    if maxval != 255 {
        return Err(Error::dataset(format!("unsupported PPM maxval {maxval}")));
    }
    pos += 1; // single whitespace byte after maxval
    let need = 3 * w * h;
    if data.len() < pos + need {
        return Err(Error::dataset(format!(
            "PPM payload truncated: need {need} bytes, have {}",
            data.len().saturating_sub(pos)
        )));
    }
    let mut image: Tensor<f32> = Tensor::zeros(&[1, 3, h, w]);
    let mut i = pos;
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                image.set4(0, ch, y, x, data[i] as f32 / 255.0);
                i += 1;
            }
        }
    }
    Ok(image)
}

const ANNOTATIONS_FILE: &str = "annotations.jsonl";

/// Generates `count` scenes into `dir`: one PPM per scene plus a JSON-lines
/// annotation file. Returns the annotations in index order.
pub fn write_dataset(spec: &SceneSpec, count: usize, dir: &Path) -> Result<Vec<Annotation>> {
    spec.validate()?;
    std::fs::create_dir_all(dir)?;
    let mut annotations = Vec::with_capacity(count);
    let mut jsonl = std::fs::File::create(dir.join(ANNOTATIONS_FILE))?;
    for index in 0..count {
        let (image, ann) = generate_scene(spec, index)?;
        write_ppm(&dir.join(format!("{}.ppm", ann.id)), &image)?;
        serde_json::to_writer(&mut jsonl, &ann)?;
        jsonl.write_all(b"\n")?;
        annotations.push(ann);
    }
    Ok(annotations)
}

/// Reads annotations (and referenced images) back. A directory without an
/// annotation file holds an empty dataset; a malformed line is an error
/// naming its line number.
pub fn read_dataset(dir: &Path) -> Result<Vec<(Tensor<f32>, Annotation)>> {
    let path = dir.join(ANNOTATIONS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(std::fs::File::open(&path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ann: Annotation = serde_json::from_str(&line).map_err(|e| {
            Error::dataset(format!(
                "{} line {}: {e}",
                path.display(),
                lineno + 1
            ))
        })?;
        let image = read_ppm(&dir.join(format!("{}.ppm", ann.id)))?;
        out.push((image, ann));
    }
    Ok(out)
}

/// Reads only the annotation records (no pixel data).
pub fn read_annotations(dir: &Path) -> Result<Vec<Annotation>> {
    let path = dir.join(ANNOTATIONS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut file = std::fs::File::open(&path)?;
    let mut text = String::new();
    file.read_to_string(&mut text)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ann: Annotation = serde_json::from_str(line).map_err(|e| {
            Error::dataset(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        out.push(ann);
    }
    Ok(out)
}
