//! Shared helpers for the integration suites: brute-force reference
//! implementations written straight from the operation definitions, random
//! instance generators, and reusable pass/fail batteries used both by the
//! per-operation tests and by the acceptance suite.
//!
//! Random inputs are dyadic rationals (multiples of 1/32) so that every
//! product and partial sum in `f64` is exact; the implementation and the
//! reference can then be compared for bit equality regardless of their
//! internal accumulation order.

#![allow(dead_code)] // not every test binary uses every helper

use rfdnet::mlps::{self, PsBanks};
use rfdnet::ops;
use rfdnet::rng::Lcg64;
use rfdnet::rpn::BBox;
use rfdnet::tensor::Tensor;

/// Tensor of dyadic rationals in [-2, 2] with 1/32 resolution.
pub fn dyadic_tensor(rng: &mut Lcg64, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| (rng.below(129) as f64 - 64.0) / 32.0)
}

/// Tensor of continuous uniforms, for gradient checks (no tie or kink
/// avoidance beyond what each caller arranges).
pub fn uniform_tensor(rng: &mut Lcg64, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform(lo, hi))
}

// ---------------------------------------------------------------------------
// Brute-force references
// ---------------------------------------------------------------------------

/// Direct transcription of the convolution definition: for every output
/// element, sum the kernel window over all input channels, one scalar at a
/// time, reading the zero-padded input through a bounds check.
pub fn oracle_conv2d(
    input: &Tensor<f64>,
    weight: &Tensor<f64>,
    bias: Option<&Tensor<f64>>,
    stride: usize,
    pad: usize,
) -> Tensor<f64> {
    let (nb, p_in, h, w) = (
        input.shape[0],
        input.shape[1],
        input.shape[2],
        input.shape[3],
    );
    let (q_out, _, k, _) = (
        weight.shape[0],
        weight.shape[1],
        weight.shape[2],
        weight.shape[3],
    );
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(&[nb, q_out, oh, ow]);
    for n in 0..nb {
        for q in 0..q_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = match bias {
                        Some(b) => b.data[q],
                        None => 0.0,
                    };
                    for i in 0..k {
                        for j in 0..k {
                            for p in 0..p_in {
                                let y = (oy * stride + i) as isize - pad as isize;
                                let x = (ox * stride + j) as isize - pad as isize;
                                if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                                    acc += weight.at4(q, p, i, j)
                                        * input.at4(n, p, y as usize, x as usize);
                                }
                            }
                        }
                    }
                    out.set4(n, q, oy, ox, acc);
                }
            }
        }
    }
    out
}

/// Per-channel convolution reference (one filter per channel, no mixing).
pub fn oracle_depthwise(
    input: &Tensor<f64>,
    weight: &Tensor<f64>,
    stride: usize,
    pad: usize,
) -> Tensor<f64> {
    let (nb, c, h, w) = (
        input.shape[0],
        input.shape[1],
        input.shape[2],
        input.shape[3],
    );
    let k = weight.shape[1];
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(&[nb, c, oh, ow]);
    for n in 0..nb {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for i in 0..k {
                        for j in 0..k {
                            let y = (oy * stride + i) as isize - pad as isize;
                            let x = (ox * stride + j) as isize - pad as isize;
                            if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                                acc += weight.data[(ci * k + i) * k + j]
                                    * input.at4(n, ci, y as usize, x as usize);
                            }
                        }
                    }
                    out.set4(n, ci, oy, ox, acc);
                }
            }
        }
    }
    out
}

/// Unpadded max pooling reference with optional ceil-mode output extent.
pub fn oracle_maxpool(
    input: &Tensor<f64>,
    window: usize,
    stride: usize,
    ceil_mode: bool,
) -> Tensor<f64> {
    let (nb, c, h, w) = (
        input.shape[0],
        input.shape[1],
        input.shape[2],
        input.shape[3],
    );
    let ext = |n: usize| {
        let span = n - window;
        if ceil_mode {
            span.div_ceil(stride) + 1
        } else {
            span / stride + 1
        }
    };
    let (oh, ow) = (ext(h), ext(w));
    let mut out = Tensor::zeros(&[nb, c, oh, ow]);
    for n in 0..nb {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    for y in (oy * stride)..(oy * stride + window).min(h) {
                        for x in (ox * stride)..(ox * stride + window).min(w) {
                            best = best.max(input.at4(n, ci, y, x));
                        }
                    }
                    out.set4(n, ci, oy, ox, best);
                }
            }
        }
    }
    out
}

/// Bin-averaged pooling reference, one (channel, bin) pair at a time: bin
/// (m, n) spans feature pixels `[floor(lo + m*bin), ceil(lo + (m+1)*bin))`
/// clamped to the map, and pools to the mean of the pixels it covers (0 if
/// it covers none). Pixel sums run in the opposite loop order from the
/// implementation; the dyadic inputs keep them exact either way.
pub fn oracle_roi_pool(banks: &PsBanks<f64>, roi: &BBox, stride: usize) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (banks.cls_maps.shape[2], banks.cls_maps.shape[3]);
    let s = stride as f64;
    let (x1, y1, x2, y2) = (roi.x1 / s, roi.y1 / s, roi.x2 / s, roi.y2 / s);
    let k = banks.k;
    let kk = k * k;
    let bounds = |lo: f64, hi: f64, idx: usize, limit: usize| {
        let bin = (hi - lo) / k as f64;
        let a = ((lo + idx as f64 * bin).floor() as isize).clamp(0, limit as isize) as usize;
        let b = ((lo + (idx + 1) as f64 * bin).ceil() as isize).clamp(0, limit as isize) as usize;
        (a, b)
    };
    let mean_over = |maps: &Tensor<f64>, ch: usize, m: usize, n: usize| {
        let (ys, ye) = bounds(y1, y2, m, h);
        let (xs, xe) = bounds(x1, x2, n, w);
        if ys >= ye || xs >= xe {
            return 0.0;
        }
        let mut sum = 0.0;
        for x in xs..xe {
            for y in ys..ye {
                sum += maps.at4(0, ch, y, x);
            }
        }
        sum / ((ye - ys) * (xe - xs)) as f64
    };
    let mut cls = vec![0.0; kk * banks.classes];
    let mut reg = vec![0.0; 4 * kk];
    for m in 0..k {
        for n in 0..k {
            for c in 0..banks.classes {
                let ch = c * kk + m * k + n;
                cls[ch] = mean_over(&banks.cls_maps, ch, m, n);
            }
            for j in 0..4 {
                let ch = j * kk + m * k + n;
                reg[ch] = mean_over(&banks.reg_maps, ch, m, n);
            }
        }
    }
    (cls, reg)
}

// ---------------------------------------------------------------------------
// Exact-equality batteries (shared with the acceptance suite)
// ---------------------------------------------------------------------------

/// Runs `instances` random small convolutions and compares against the
/// reference for bit equality. Returns the failure count.
pub fn battery_conv2d(seed: u64, instances: usize) -> usize {
    let mut rng = Lcg64::new(seed);
    let mut failures = 0;
    for _ in 0..instances {
        let p = 1 + rng.below(3);
        let q = 1 + rng.below(3);
        let k = 1 + rng.below(3);
        let stride = 1 + rng.below(2);
        let pad = rng.below(2);
        let h = k + rng.below(5);
        let w = k + rng.below(5);
        let nb = 1 + rng.below(2);
        let input = dyadic_tensor(&mut rng, &[nb, p, h, w]);
        let weight = dyadic_tensor(&mut rng, &[q, p, k, k]);
        let bias_t;
        let bias = if rng.chance(0.5) {
            bias_t = dyadic_tensor(&mut rng, &[q]);
            Some(&bias_t)
        } else {
            None
        };
        let got = ops::conv2d(&input, &weight, bias, stride, pad).unwrap();
        let want = oracle_conv2d(&input, &weight, bias, stride, pad);
        if got != want {
            failures += 1;
        }
    }
    failures
}

pub fn battery_depthwise(seed: u64, instances: usize) -> usize {
    let mut rng = Lcg64::new(seed);
    let mut failures = 0;
    for _ in 0..instances {
        let c = 1 + rng.below(4);
        let k = 1 + rng.below(3);
        let stride = 1 + rng.below(2);
        let pad = rng.below(2);
        let h = k + rng.below(5);
        let w = k + rng.below(5);
        let input = dyadic_tensor(&mut rng, &[1, c, h, w]);
        let weight = dyadic_tensor(&mut rng, &[c, k, k]);
        let got = ops::depthwise_conv2d(&input, &weight, stride, pad).unwrap();
        let want = oracle_depthwise(&input, &weight, stride, pad);
        if got != want {
            failures += 1;
        }
    }
    failures
}

/// Random position-sensitive pooling instances: grids up to the production
/// 7x7, boxes centred inside the map but free to hang off its edges.
pub fn battery_roi_pool(seed: u64, instances: usize) -> usize {
    let mut rng = Lcg64::new(seed);
    let mut failures = 0;
    for _ in 0..instances {
        let k = [1, 2, 3, 7][rng.below(4)];
        let classes = 1 + rng.below(3);
        let h = 2 + rng.below(9);
        let w = 2 + rng.below(9);
        let stride = 1 + rng.below(2);
        let banks = PsBanks {
            k,
            classes,
            cls_maps: dyadic_tensor(&mut rng, &[1, k * k * classes, h, w]),
            reg_maps: dyadic_tensor(&mut rng, &[1, 4 * k * k, h, w]),
        };
        let s = stride as f64;
        let eighth = |rng: &mut Lcg64, max: f64| rng.below((max * 8.0) as usize + 1) as f64 / 8.0;
        let cx = eighth(&mut rng, w as f64 * s);
        let cy = eighth(&mut rng, h as f64 * s);
        let hx = 0.125 + eighth(&mut rng, w as f64 * s / 2.0);
        let hy = 0.125 + eighth(&mut rng, h as f64 * s / 2.0);
        let roi = BBox::new(cx - hx, cy - hy, cx + hx, cy + hy);
        let got = mlps::mlps_roi_pool(&banks, &roi, stride).unwrap();
        let (want_cls, want_reg) = oracle_roi_pool(&banks, &roi, stride);
        if got.cls != want_cls || got.reg != want_reg {
            failures += 1;
        }
    }
    failures
}

pub fn battery_maxpool(seed: u64, instances: usize) -> usize {
    let mut rng = Lcg64::new(seed);
    let mut failures = 0;
    for _ in 0..instances {
        let c = 1 + rng.below(3);
        let stride = 1 + rng.below(3);
        let window = stride + rng.below(3).min(2);
        let h = window + rng.below(8);
        let w = window + rng.below(8);
        let ceil_mode = rng.chance(0.5);
        let input = dyadic_tensor(&mut rng, &[1, c, h, w]);
        let (got, _) = ops::maxpool2d(&input, window, stride, ceil_mode).unwrap();
        let want = oracle_maxpool(&input, window, stride, ceil_mode);
        if got != want {
            failures += 1;
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// Gradient-check runners (shared with the acceptance suite)
// ---------------------------------------------------------------------------

/// Weighted scalar reduction of a tensor: `sum(c .* t)` with fixed random
/// coefficients, so every output element influences the loss.
pub fn weighted_sum(t: &Tensor<f64>, coeffs: &Tensor<f64>) -> f64 {
    t.data
        .iter()
        .zip(coeffs.data.iter())
        .map(|(a, b)| a * b)
        .sum()
}

pub struct OpGradCheck {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

fn record(name: &'static str, report: ops::GradCheckReport) -> OpGradCheck {
    OpGradCheck {
        name,
        ok: report.ok,
        detail: format!(
            "worst |analytic-numeric| = {:.3e} at element {} (analytic {:.6}, numeric {:.6}, {} elements)",
            report.worst_abs_err,
            report.worst_index,
            report.worst_analytic,
            report.worst_numeric,
            report.elements_checked
        ),
    }
}

/// Finite-difference checks for every differentiable primitive, in `f64`.
/// Returns one record per (operation, argument) pair.
pub fn gradient_check_all(seed: u64) -> Vec<OpGradCheck> {
    let mut rng = Lcg64::new(seed);
    let cfg = ops::GradCheckCfg::default();
    let mut out = Vec::new();

    // conv2d: input, weight and bias gradients.
    {
        let input = uniform_tensor(&mut rng, &[2, 3, 5, 6], -1.0, 1.0);
        let weight = uniform_tensor(&mut rng, &[4, 3, 3, 3], -1.0, 1.0);
        let bias = uniform_tensor(&mut rng, &[4], -0.5, 0.5);
        let coeffs = uniform_tensor(&mut rng, &[2, 4, 3, 3], -1.0, 1.0);
        let (stride, pad) = (2, 1);

        let loss_in = |x: &Tensor<f64>| {
            weighted_sum(
                &ops::conv2d(x, &weight, Some(&bias), stride, pad).unwrap(),
                &coeffs,
            )
        };
        let grad_in = |x: &Tensor<f64>| {
            ops::conv2d_backward(x, &weight, &coeffs, stride, pad)
                .unwrap()
                .input
        };
        out.push(record(
            "conv2d/input",
            ops::check_gradients(&loss_in, &grad_in, &input, cfg),
        ));

        let loss_w = |wt: &Tensor<f64>| {
            weighted_sum(
                &ops::conv2d(&input, wt, Some(&bias), stride, pad).unwrap(),
                &coeffs,
            )
        };
        let grad_w = |wt: &Tensor<f64>| {
            ops::conv2d_backward(&input, wt, &coeffs, stride, pad)
                .unwrap()
                .weight
        };
        out.push(record(
            "conv2d/weight",
            ops::check_gradients(&loss_w, &grad_w, &weight, cfg),
        ));

        let loss_b = |b: &Tensor<f64>| {
            weighted_sum(
                &ops::conv2d(&input, &weight, Some(b), stride, pad).unwrap(),
                &coeffs,
            )
        };
        let grad_b = |_b: &Tensor<f64>| {
            ops::conv2d_backward(&input, &weight, &coeffs, stride, pad)
                .unwrap()
                .bias
        };
        out.push(record(
            "conv2d/bias",
            ops::check_gradients(&loss_b, &grad_b, &bias, cfg),
        ));
    }

    // depthwise_conv2d: input and weight gradients.
    {
        let input = uniform_tensor(&mut rng, &[1, 4, 6, 5], -1.0, 1.0);
        let weight = uniform_tensor(&mut rng, &[4, 3, 3], -1.0, 1.0);
        let coeffs = uniform_tensor(&mut rng, &[1, 4, 6, 5], -1.0, 1.0);
        let (stride, pad) = (1, 1);

        let loss_in = |x: &Tensor<f64>| {
            weighted_sum(
                &ops::depthwise_conv2d(x, &weight, stride, pad).unwrap(),
                &coeffs,
            )
        };
        let grad_in = |x: &Tensor<f64>| {
            ops::depthwise_conv2d_backward(x, &weight, &coeffs, stride, pad)
                .unwrap()
                .input
        };
        out.push(record(
            "depthwise_conv2d/input",
            ops::check_gradients(&loss_in, &grad_in, &input, cfg),
        ));

        let loss_w = |wt: &Tensor<f64>| {
            weighted_sum(
                &ops::depthwise_conv2d(&input, wt, stride, pad).unwrap(),
                &coeffs,
            )
        };
        let grad_w = |wt: &Tensor<f64>| {
            ops::depthwise_conv2d_backward(&input, wt, &coeffs, stride, pad)
                .unwrap()
                .weight
        };
        out.push(record(
            "depthwise_conv2d/weight",
            ops::check_gradients(&loss_w, &grad_w, &weight, cfg),
        ));
    }

    // maxpool2d: input gradient. Values are spread far apart relative to
    // the probe step so the argmax never flips during probing.
    {
        let mut vals: Vec<f64> = (0..(2 * 3 * 6 * 6)).map(|i| i as f64 * 0.37).collect();
        rng.shuffle(&mut vals);
        let input = Tensor::from_vec(&[2, 3, 6, 6], vals);
        let coeffs = uniform_tensor(&mut rng, &[2, 3, 3, 3], -1.0, 1.0);
        let loss = |x: &Tensor<f64>| {
            weighted_sum(&ops::maxpool2d(x, 3, 2, true).unwrap().0, &coeffs)
        };
        let grad = |x: &Tensor<f64>| {
            let (_, argmax) = ops::maxpool2d(x, 3, 2, true).unwrap();
            ops::maxpool2d_backward(&x.shape, &argmax, &coeffs)
        };
        out.push(record(
            "maxpool2d/input",
            ops::check_gradients(&loss, &grad, &input, cfg),
        ));
    }

    // global_avgpool: input gradient.
    {
        let input = uniform_tensor(&mut rng, &[2, 3, 4, 5], -1.0, 1.0);
        let coeffs = uniform_tensor(&mut rng, &[2, 3], -1.0, 1.0);
        let loss = |x: &Tensor<f64>| weighted_sum(&ops::global_avgpool(x).unwrap(), &coeffs);
        let grad = |x: &Tensor<f64>| ops::global_avgpool_backward(&coeffs, x.shape[2], x.shape[3]);
        out.push(record(
            "global_avgpool/input",
            ops::check_gradients(&loss, &grad, &input, cfg),
        ));
    }

    // batchnorm (training mode): input, gamma and beta gradients.
    {
        let input = uniform_tensor(&mut rng, &[3, 2, 3, 3], -2.0, 2.0);
        let gamma = uniform_tensor(&mut rng, &[2], 0.5, 1.5);
        let beta = uniform_tensor(&mut rng, &[2], -0.5, 0.5);
        let coeffs = uniform_tensor(&mut rng, &[3, 2, 3, 3], -1.0, 1.0);

        let fresh = |g: &Tensor<f64>, b: &Tensor<f64>| ops::BnParams::<f64> {
            gamma: g.clone(),
            beta: b.clone(),
            running_mean: Tensor::zeros(&[2]),
            running_var: Tensor::filled(&[2], 1.0),
        };

        let loss_in = |x: &Tensor<f64>| {
            let mut bn = fresh(&gamma, &beta);
            weighted_sum(&ops::batchnorm_train(x, &mut bn).unwrap().0, &coeffs)
        };
        let grad_in = |x: &Tensor<f64>| {
            let mut bn = fresh(&gamma, &beta);
            let (_, cache) = ops::batchnorm_train(x, &mut bn).unwrap();
            ops::batchnorm_backward(&coeffs, &cache, &gamma).0
        };
        out.push(record(
            "batchnorm/input",
            ops::check_gradients(&loss_in, &grad_in, &input, cfg),
        ));

        let loss_gamma = |g: &Tensor<f64>| {
            let mut bn = fresh(g, &beta);
            weighted_sum(&ops::batchnorm_train(&input, &mut bn).unwrap().0, &coeffs)
        };
        let grad_gamma = |g: &Tensor<f64>| {
            let mut bn = fresh(g, &beta);
            let (_, cache) = ops::batchnorm_train(&input, &mut bn).unwrap();
            ops::batchnorm_backward(&coeffs, &cache, g).1
        };
        out.push(record(
            "batchnorm/gamma",
            ops::check_gradients(&loss_gamma, &grad_gamma, &gamma, cfg),
        ));

        let loss_beta = |b: &Tensor<f64>| {
            let mut bn = fresh(&gamma, b);
            weighted_sum(&ops::batchnorm_train(&input, &mut bn).unwrap().0, &coeffs)
        };
        let grad_beta = |b: &Tensor<f64>| {
            let mut bn = fresh(&gamma, b);
            let (_, cache) = ops::batchnorm_train(&input, &mut bn).unwrap();
            ops::batchnorm_backward(&coeffs, &cache, &gamma).2
        };
        out.push(record(
            "batchnorm/beta",
            ops::check_gradients(&loss_beta, &grad_beta, &beta, cfg),
        ));
    }

    // relu: input gradient, sampled away from the kink at zero.
    {
        let input = Tensor::from_fn(&[1, 2, 4, 4], |_| {
            let v = rng.uniform(0.05, 1.0);
            if rng.chance(0.5) {
                v
            } else {
                -v
            }
        });
        let coeffs = uniform_tensor(&mut rng, &[1, 2, 4, 4], -1.0, 1.0);
        let loss = |x: &Tensor<f64>| weighted_sum(&ops::relu(x), &coeffs);
        let grad = |x: &Tensor<f64>| ops::relu_backward(x, &coeffs);
        out.push(record(
            "relu/input",
            ops::check_gradients(&loss, &grad, &input, cfg),
        ));
    }

    // softmax cross-entropy: logit gradient.
    {
        let logits = uniform_tensor(&mut rng, &[7], -2.0, 2.0);
        let target = 3usize;
        let loss = |x: &Tensor<f64>| ops::softmax_cross_entropy(&x.data, target).0;
        let grad = |x: &Tensor<f64>| {
            Tensor::from_vec(&x.shape, ops::softmax_cross_entropy(&x.data, target).1)
        };
        out.push(record(
            "softmax_cross_entropy/logits",
            ops::check_gradients(&loss, &grad, &logits, cfg),
        ));
    }

    // smooth L1: residual gradient, with points in both regions (the
    // function is C1, so the transition needs no special handling).
    {
        let input = Tensor::from_vec(&[5], vec![-2.3, -0.7, 0.2, 0.8, 1.9]);
        let loss = |x: &Tensor<f64>| x.data.iter().map(|&d| ops::smooth_l1(d).0).sum();
        let grad = |x: &Tensor<f64>| x.map(|d| ops::smooth_l1(d).1);
        out.push(record(
            "smooth_l1/residual",
            ops::check_gradients(&loss, &grad, &input, cfg),
        ));
    }

    // position-sensitive pooling: gradients for both bank maps. Bin
    // membership depends only on the box coordinates, so the pooled values
    // are linear in the map values and probing cannot flip any bin.
    {
        let (k, classes, h, w, stride) = (3usize, 3usize, 6usize, 7usize, 2usize);
        let cls_maps = uniform_tensor(&mut rng, &[1, k * k * classes, h, w], -1.0, 1.0);
        let reg_maps = uniform_tensor(&mut rng, &[1, 4 * k * k, h, w], -1.0, 1.0);
        let roi = BBox::new(1.25, 0.5, 11.0, 9.75);
        let cls_coeffs: Vec<f64> =
            (0..k * k * classes).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let reg_coeffs: Vec<f64> = (0..4 * k * k).map(|_| rng.uniform(-1.0, 1.0)).collect();

        let banks_with = |cm: &Tensor<f64>, rm: &Tensor<f64>| PsBanks {
            k,
            classes,
            cls_maps: cm.clone(),
            reg_maps: rm.clone(),
        };
        let pooled_loss = |cm: &Tensor<f64>, rm: &Tensor<f64>| {
            let p = mlps::mlps_roi_pool(&banks_with(cm, rm), &roi, stride).unwrap();
            p.cls.iter().zip(&cls_coeffs).map(|(a, b)| a * b).sum::<f64>()
                + p.reg.iter().zip(&reg_coeffs).map(|(a, b)| a * b).sum::<f64>()
        };
        let pooled_grads = |cm: &Tensor<f64>, rm: &Tensor<f64>| {
            let banks = banks_with(cm, rm);
            let mut gc = Tensor::zeros(&cm.shape);
            let mut gr = Tensor::zeros(&rm.shape);
            mlps::roi_pool_backward(
                &banks,
                &roi,
                stride,
                &cls_coeffs,
                &reg_coeffs,
                &mut gc,
                &mut gr,
            )
            .unwrap();
            (gc, gr)
        };

        let loss_c = |cm: &Tensor<f64>| pooled_loss(cm, &reg_maps);
        let grad_c = |cm: &Tensor<f64>| pooled_grads(cm, &reg_maps).0;
        out.push(record(
            "mlps_roi_pool/cls_maps",
            ops::check_gradients(&loss_c, &grad_c, &cls_maps, cfg),
        ));

        let loss_r = |rm: &Tensor<f64>| pooled_loss(&cls_maps, rm);
        let grad_r = |rm: &Tensor<f64>| pooled_grads(&cls_maps, rm).1;
        out.push(record(
            "mlps_roi_pool/reg_maps",
            ops::check_gradients(&loss_r, &grad_r, &reg_maps, cfg),
        ));
    }

    out
}
