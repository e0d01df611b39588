//! Analytic parameter and multiply-add profiler.
//!
//! Networks are described as flat layer lists ([`ArchSpec`]); the profiler
//! walks the list propagating the activation shape and tallies, per layer,
//! the stored parameters and the weight multiplications at the stated input
//! size. Parameter counts include everything a checkpoint stores — weights,
//! biases, and all four normalization vectors per normalized convolution —
//! at four bytes each. Multiply-adds count one unit per weight
//! multiplication (`K²·P·Q·H'·W'` for a standard convolution, `K²·P·H'·W'`
//! for a depthwise one); since some publications count a fused
//! multiply-add as two operations, totals are reported under both the 1×
//! and the 2× convention.

use serde::{Deserialize, Serialize};

use crate::backbone::BackboneCfg;
use crate::error::{Error, Result};

/// One profiled stage of a network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// Standard convolution, `cin → cout`, square `k×k` kernel.
    Conv {
        k: usize,
        cin: usize,
        cout: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        /// Adds the four per-channel normalization vectors to the count.
        norm: bool,
    },
    /// Depthwise convolution: one `k×k` filter per channel.
    Depthwise {
        k: usize,
        channels: usize,
        stride: usize,
        pad: usize,
        norm: bool,
    },
    MaxPool {
        k: usize,
        stride: usize,
        /// Round the output extent up (partial windows at the edge) rather
        /// than down.
        ceil: bool,
    },
    /// Collapses the spatial extent to 1×1; no parameters, no multiplies.
    GlobalAvgPool,
    /// Channel concatenation of earlier layers' outputs (by index); their
    /// spatial extents must agree. No parameters, no multiplies.
    Concat { sources: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    /// Index of the layer whose output this one consumes; `None` chains
    /// from the immediately preceding layer (or the network input).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<usize>,
    #[serde(flatten)]
    pub kind: LayerKind,
}

/// A whole network as an ordered layer list plus the channel count it
/// expects at its input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub name: String,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
}

/// Per-layer profile entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub name: String,
    /// Multiplying weights only (exactly the tensor entries that touch the
    /// input); the source of the multiply-add count.
    pub weight_params: u64,
    /// Everything stored for the layer: weights, bias, normalization.
    pub params: u64,
    pub mult_adds: u64,
    /// Activation shape after this layer, `(channels, height, width)`.
    pub out_shape: (usize, usize, usize),
}

/// Whole-network profile at a stated input size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub arch: String,
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerProfile>,
    pub weight_params: u64,
    pub params: u64,
    /// `params` at four bytes each.
    pub bytes: u64,
    /// One unit per fused multiply-add.
    pub mult_adds: u64,
    /// Two units per fused multiply-add.
    pub mult_adds_doubled: u64,
}

fn conv_extent(inp: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = inp + 2 * pad;
    if padded < k {
        return Err(Error::shape(format!(
            "kernel {k} exceeds padded extent {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

fn pool_extent(inp: usize, k: usize, stride: usize, ceil: bool) -> Result<usize> {
    if inp < k {
        return Err(Error::shape(format!(
            "pool window {k} exceeds extent {inp}"
        )));
    }
    let span = inp - k;
    Ok(if ceil {
        span.div_ceil(stride) + 1
    } else {
        span / stride + 1
    })
}

/// Walks the layer list at the given square-ish input and tallies stored
/// parameters and weight multiplications per layer. Rejects inconsistent
/// channel counts and any stage whose output extent would collapse.
pub fn profile_network(arch: &ArchSpec, height: usize, width: usize) -> Result<ProfileReport> {
    if arch.input_channels == 0 || height == 0 || width == 0 {
        return Err(Error::shape("profiled input must be non-empty"));
    }
    let mut layers: Vec<LayerProfile> = Vec::with_capacity(arch.layers.len());
    for (idx, layer) in arch.layers.iter().enumerate() {
        let feed = |i: Option<usize>| -> Result<(usize, usize, usize)> {
            match i {
                None if layers.is_empty() => Ok((arch.input_channels, height, width)),
                None => Ok(layers.last().unwrap().out_shape),
                Some(src) if src < idx => Ok(layers[src].out_shape),
                Some(src) => Err(Error::shape(format!(
                    "layer {}: source {src} is not an earlier layer",
                    layer.name
                ))),
            }
        };
        let (c0, h0, w0) = feed(layer.from)?;
        let (mut c, mut h, mut w) = (c0, h0, w0);
        let (weight_params, params, mult_adds) = match &layer.kind {
            &LayerKind::Conv {
                k,
                cin,
                cout,
                stride,
                pad,
                bias,
                norm,
            } => {
                if cin != c {
                    return Err(Error::shape(format!(
                        "layer {}: expects {cin} input channels, got {c}",
                        layer.name
                    )));
                }
                h = conv_extent(h, k, stride, pad)?;
                w = conv_extent(w, k, stride, pad)?;
                c = cout;
                let weights = (k * k * cin * cout) as u64;
                let extras = if bias { cout as u64 } else { 0 }
                    + if norm { 4 * cout as u64 } else { 0 };
                (weights, weights + extras, weights * (h * w) as u64)
            }
            &LayerKind::Depthwise {
                k,
                channels,
                stride,
                pad,
                norm,
            } => {
                if channels != c {
                    return Err(Error::shape(format!(
                        "layer {}: expects {channels} channels, got {c}",
                        layer.name
                    )));
                }
                h = conv_extent(h, k, stride, pad)?;
                w = conv_extent(w, k, stride, pad)?;
                let weights = (k * k * channels) as u64;
                let extras = if norm { 4 * channels as u64 } else { 0 };
                (weights, weights + extras, weights * (h * w) as u64)
            }
            &LayerKind::MaxPool { k, stride, ceil } => {
                h = pool_extent(h, k, stride, ceil)?;
                w = pool_extent(w, k, stride, ceil)?;
                (0, 0, 0)
            }
            LayerKind::GlobalAvgPool => {
                h = 1;
                w = 1;
                (0, 0, 0)
            }
            LayerKind::Concat { sources } => {
                if sources.is_empty() {
                    return Err(Error::shape(format!(
                        "layer {}: concatenation needs sources",
                        layer.name
                    )));
                }
                c = 0;
                for (si, &src) in sources.iter().enumerate() {
                    if src >= idx {
                        return Err(Error::shape(format!(
                            "layer {}: source {src} is not an earlier layer",
                            layer.name
                        )));
                    }
                    let (sc, sh, sw) = layers[src].out_shape;
                    if si == 0 {
                        h = sh;
                        w = sw;
                    } else if (sh, sw) != (h, w) {
                        return Err(Error::shape(format!(
                            "layer {}: concatenated extents differ",
                            layer.name
                        )));
                    }
                    c += sc;
                }
                (0, 0, 0)
            }
        };
        layers.push(LayerProfile {
            name: layer.name.clone(),
            weight_params,
            params,
            mult_adds,
            out_shape: (c, h, w),
        });
    }
    let weight_params = layers.iter().map(|l| l.weight_params).sum();
    let params: u64 = layers.iter().map(|l| l.params).sum();
    let mult_adds: u64 = layers.iter().map(|l| l.mult_adds).sum();
    Ok(ProfileReport {
        arch: arch.name.clone(),
        input: (arch.input_channels, height, width),
        layers,
        weight_params,
        params,
        bytes: 4 * params,
        mult_adds,
        mult_adds_doubled: 2 * mult_adds,
    })
}

/// Layer list of the detection backbone (and its optional classifier head)
/// for any width configuration: a 3×3/2 normalized stem, eight
/// squeeze → depthwise → pointwise modules, ceil-mode 3×3/2 max pools after
/// the stem and modules 3 and 5, then (if configured) a biased 1×1
/// classifier convolution and a global average pool.
pub fn backbone_arch(cfg: &BackboneCfg) -> ArchSpec {
    let conv = |name: &str, k: usize, cin: usize, cout: usize, stride: usize, pad: usize| {
        LayerSpec {
            name: name.to_string(),
            from: None,
            kind: LayerKind::Conv {
                k,
                cin,
                cout,
                stride,
                pad,
                bias: false,
                norm: true,
            },
        }
    };
    let pool = |name: &str| LayerSpec {
        name: name.to_string(),
        from: None,
        kind: LayerKind::MaxPool {
            k: 3,
            stride: 2,
            ceil: true,
        },
    };
    let mut layers = vec![conv("conv1", 3, 3, cfg.conv1_out, 2, 1), pool("maxpool1")];
    let mut cin = cfg.conv1_out;
    for (i, widths) in cfg.dsf.iter().enumerate() {
        let stage = i + 2;
        layers.push(conv(
            &format!("dsf{stage}.squeeze"),
            1,
            cin,
            widths.squeeze,
            1,
            0,
        ));
        layers.push(LayerSpec {
            name: format!("dsf{stage}.depthwise"),
            from: None,
            kind: LayerKind::Depthwise {
                k: 3,
                channels: widths.squeeze,
                stride: 1,
                pad: 1,
                norm: true,
            },
        });
        layers.push(conv(
            &format!("dsf{stage}.pointwise"),
            1,
            widths.squeeze,
            widths.out,
            1,
            0,
        ));
        cin = widths.out;
        if stage == 3 || stage == 5 {
            layers.push(pool(&format!("maxpool{stage}")));
        }
    }
    if let Some(classes) = cfg.classifier_classes {
        layers.push(LayerSpec {
            name: "conv10".to_string(),
            from: None,
            kind: LayerKind::Conv {
                k: 1,
                cin,
                cout: classes,
                stride: 1,
                pad: 0,
                bias: true,
                norm: false,
            },
        });
        layers.push(LayerSpec {
            name: "avgpool".to_string(),
            from: None,
            kind: LayerKind::GlobalAvgPool,
        });
    }
    ArchSpec {
        name: "rfdnet".to_string(),
        input_channels: 3,
        layers,
    }
}

/// The published small-model reference configuration: a 7×7/2 stem, eight
/// fire modules (1×1 squeeze into parallel 1×1 and padded 3×3 expands),
/// floor-mode pools after the stem and fires 4 and 8, and a biased 1×1
/// 1000-class head. All convolutions biased, none normalized.
pub fn squeezenet_v10() -> ArchSpec {
    let conv = |name: String,
                from: Option<usize>,
                k: usize,
                cin: usize,
                cout: usize,
                stride: usize,
                pad: usize| {
        LayerSpec {
            name,
            from,
            kind: LayerKind::Conv {
                k,
                cin,
                cout,
                stride,
                pad,
                bias: true,
                norm: false,
            },
        }
    };
    let pool = |name: String| LayerSpec {
        name,
        from: None,
        kind: LayerKind::MaxPool {
            k: 3,
            stride: 2,
            ceil: false,
        },
    };
    let mut layers = vec![
        conv("conv1".to_string(), None, 7, 3, 96, 2, 0),
        pool("maxpool1".to_string()),
    ];
    let mut cin = 96;
    // (squeeze, expand) widths of fires 2..9; each expand reads the squeeze
    // output through a 1×1 and a padded 3×3 branch whose outputs
    // concatenate.
    let fires = [
        (16, 64),
        (16, 64),
        (32, 128),
        (32, 128),
        (48, 192),
        (48, 192),
        (64, 256),
        (64, 256),
    ];
    for (i, (s, e)) in fires.into_iter().enumerate() {
        let stage = i + 2;
        layers.push(conv(format!("fire{stage}.squeeze"), None, 1, cin, s, 1, 0));
        let squeeze_idx = layers.len() - 1;
        layers.push(conv(
            format!("fire{stage}.expand1"),
            Some(squeeze_idx),
            1,
            s,
            e,
            1,
            0,
        ));
        layers.push(conv(
            format!("fire{stage}.expand3"),
            Some(squeeze_idx),
            3,
            s,
            e,
            1,
            1,
        ));
        layers.push(LayerSpec {
            name: format!("fire{stage}.concat"),
            from: None,
            kind: LayerKind::Concat {
                sources: vec![squeeze_idx + 1, squeeze_idx + 2],
            },
        });
        cin = 2 * e;
        if stage == 4 || stage == 8 {
            layers.push(pool(format!("maxpool{stage}")));
        }
    }
    layers.push(conv("conv10".to_string(), None, 1, cin, 1000, 1, 0));
    layers.push(LayerSpec {
        name: "avgpool".to_string(),
        from: None,
        kind: LayerKind::GlobalAvgPool,
    });
    ArchSpec {
        name: "squeezenet-v1.0".to_string(),
        input_channels: 3,
        layers,
    }
}

/// Renders a profile as an aligned plain-text table with a totals row.
pub fn render_profile_table(report: &ProfileReport) -> String {
    let name_w = report
        .layers
        .iter()
        .map(|l| l.name.len())
        .chain(["layer".len(), "total".len()])
        .max()
        .unwrap_or(5);
    let mut out = String::new();
    out.push_str(&format!(
        "{} at {}x{}x{}\n",
        report.arch, report.input.0, report.input.1, report.input.2
    ));
    out.push_str(&format!(
        "{:name_w$}  {:>12}  {:>14}  {:>14}\n",
        "layer", "params", "mult-adds", "out shape"
    ));
    for l in &report.layers {
        out.push_str(&format!(
            "{:name_w$}  {:>12}  {:>14}  {:>14}\n",
            l.name,
            l.params,
            l.mult_adds,
            format!("{}x{}x{}", l.out_shape.0, l.out_shape.1, l.out_shape.2)
        ));
    }
    out.push_str(&format!(
        "{:name_w$}  {:>12}  {:>14}  ({} bytes, {} doubled)\n",
        "total", report.params, report.mult_adds, report.bytes, report.mult_adds_doubled
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::Backbone;
    use crate::rng::Lcg64;

    fn full_cfg() -> BackboneCfg {
        BackboneCfg::table()
    }

    #[test]
    fn full_backbone_matches_its_published_budget() {
        let report = profile_network(&backbone_arch(&full_cfg()), 224, 224).unwrap();
        // Hand summation of the layer table: stem 1728, the eight modules,
        // and the 512x1000 head.
        assert_eq!(report.weight_params, 1_751_616);
        let conv_weights: u64 = report.layers.iter().map(|l| l.weight_params).sum();
        assert_eq!(conv_weights, report.weight_params);
        assert_eq!(report.params, 1_775_912);
        assert_eq!(report.bytes, 7_103_648);
        // Within five percent of the published 7.1 MB.
        let mb = report.bytes as f64 / 1e6;
        assert!((mb - 7.1).abs() / 7.1 < 0.05, "model size {mb} MB");
        assert_eq!(report.mult_adds, 451_282_944);
        assert_eq!(report.mult_adds_doubled, 902_565_888);
    }

    #[test]
    fn profiled_totals_are_the_sum_of_the_rows() {
        for (arch, side) in [(backbone_arch(&full_cfg()), 224), (squeezenet_v10(), 227)] {
            let r = profile_network(&arch, side, side).unwrap();
            assert_eq!(r.params, r.layers.iter().map(|l| l.params).sum::<u64>());
            assert_eq!(
                r.mult_adds,
                r.layers.iter().map(|l| l.mult_adds).sum::<u64>()
            );
            assert_eq!(r.bytes, 4 * r.params);
            assert_eq!(r.mult_adds_doubled, 2 * r.mult_adds);
        }
    }

    #[test]
    fn parameter_count_matches_the_real_network_exactly() {
        // The analytic count must agree with the number of values the
        // backbone actually stores, for the full table and a toy width.
        for cfg in [full_cfg(), BackboneCfg::toy(4)] {
            let mut rng = Lcg64::new(3);
            let net: Backbone<f32> = Backbone::new(cfg.clone(), &mut rng).unwrap();
            let mut named = Vec::new();
            net.collect("", &mut named);
            let stored: u64 = named.iter().map(|(_, t)| t.data.len() as u64).sum();
            let report = profile_network(&backbone_arch(&cfg), 224, 224).unwrap();
            assert_eq!(report.params, stored, "widths {:?}", cfg.conv1_out);
        }
    }

    #[test]
    fn reference_model_matches_its_published_budget() {
        let report = profile_network(&squeezenet_v10(), 227, 227).unwrap();
        assert_eq!(report.params, 1_248_424);
        assert_eq!(report.bytes, 4_993_696);
        // Within ten percent of the published 4.8 MB.
        let mb = report.bytes as f64 / 1e6;
        assert!((mb - 4.8).abs() / 4.8 < 0.10, "model size {mb} MB");
        assert_eq!(report.mult_adds, 832_667_936);
        // Published rounded figure: 833M, matched to 0.1%.
        assert!((report.mult_adds as f64 / 833e6 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn single_pointwise_layer_is_pure_arithmetic() {
        let arch = ArchSpec {
            name: "head".to_string(),
            input_channels: 512,
            layers: vec![LayerSpec {
                name: "fc".to_string(),
                from: None,
                kind: LayerKind::Conv {
                    k: 1,
                    cin: 512,
                    cout: 1000,
                    stride: 1,
                    pad: 0,
                    bias: false,
                    norm: false,
                },
            }],
        };
        let r = profile_network(&arch, 1, 1).unwrap();
        assert_eq!(r.params, 512_000);
        assert_eq!(r.mult_adds, 512_000);
    }

    #[test]
    fn mult_adds_scale_with_area_and_params_do_not() {
        let a = profile_network(&backbone_arch(&full_cfg()), 224, 224).unwrap();
        let b = profile_network(&backbone_arch(&full_cfg()), 448, 448).unwrap();
        assert_eq!(a.params, b.params);
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(4 * la.mult_adds, lb.mult_adds, "layer {}", la.name);
        }
        assert_eq!(4 * a.mult_adds, b.mult_adds);
    }

    /// The depthwise + pointwise pair of the widest module costs less than
    /// an eighth of the standard 3×3 convolution it replaces.
    #[test]
    fn separable_pair_beats_an_eighth_of_the_standard_conv() {
        let report = profile_network(&backbone_arch(&full_cfg()), 224, 224).unwrap();
        let madds = |name: &str| {
            report
                .layers
                .iter()
                .find(|l| l.name == name)
                .unwrap_or_else(|| panic!("missing layer {name}"))
                .mult_adds
        };
        let pair = madds("dsf8.depthwise") + madds("dsf8.pointwise");
        let (_, h, w) = report
            .layers
            .iter()
            .find(|l| l.name == "dsf8.depthwise")
            .unwrap()
            .out_shape;
        let standard = 9u64 * 512 * 512 * (h * w) as u64;
        assert!(
            8 * pair < standard,
            "separable pair {pair} not under an eighth of {standard}"
        );
    }

    #[test]
    fn malformed_architectures_are_rejected() {
        let mut arch = backbone_arch(&full_cfg());
        // Channel mismatch.
        if let LayerKind::Conv { cin, .. } = &mut arch.layers[2].kind {
            *cin += 1;
        } else {
            panic!("expected a convolution at index 2");
        }
        assert!(profile_network(&arch, 224, 224).is_err());
        // Extent collapse: pooling a 1x1 map.
        let tiny = ArchSpec {
            name: "tiny".to_string(),
            input_channels: 1,
            layers: vec![LayerSpec {
                name: "pool".to_string(),
                from: None,
                kind: LayerKind::MaxPool {
                    k: 3,
                    stride: 2,
                    ceil: true,
                },
            }],
        };
        assert!(profile_network(&tiny, 1, 1).is_err());
        assert!(profile_network(&backbone_arch(&full_cfg()), 0, 224).is_err());
    }

    #[test]
    fn report_serializes_and_renders() {
        let r = profile_network(&squeezenet_v10(), 227, 227).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        let back: ProfileReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let table = render_profile_table(&r);
        assert!(table.contains("squeezenet-v1.0"));
        assert!(table.contains("fire9.expand3"));
        assert!(table.lines().last().unwrap().contains("832667936"));
    }
}
