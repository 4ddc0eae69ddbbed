//! Shared test oracles: naive nested-loop references for the convolution and
//! pooling fast paths, a central finite-difference gradient harness, and
//! synthetic dataset fixtures.
//!
//! Everything here is deliberately independent of the library's kernel
//! implementations: padding arithmetic and reductions are re-derived from the
//! layer definitions, not delegated.

#![allow(dead_code)]

use coronet::graph::{backward, forward, Graph, Mode, ParameterStore};
use coronet::layers::Padding;
use coronet::rng;
use coronet::tensor::Tensor;
use rand_core::RngCore;
use std::path::{Path, PathBuf};

fn pad_for(input: usize, kernel: usize, stride: usize, padding: Padding) -> (usize, usize) {
    match padding {
        Padding::Valid => ((input - kernel) / stride + 1, 0),
        Padding::Same => {
            let out = input.div_ceil(stride);
            let needed = ((out - 1) * stride + kernel).saturating_sub(input);
            (out, needed / 2)
        }
    }
}

/// Plain quadruple-loop cross-correlation with zero padding.
pub fn naive_conv2d(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: Padding,
    bias: Option<&Tensor>,
) -> Tensor {
    let [n, h, w, cin] = [
        input.dims()[0],
        input.dims()[1],
        input.dims()[2],
        input.dims()[3],
    ];
    let [kh, kw, _, cout] = [
        kernel.dims()[0],
        kernel.dims()[1],
        kernel.dims()[2],
        kernel.dims()[3],
    ];
    let (oh, pad_top) = pad_for(h, kh, stride, padding);
    let (ow, pad_left) = pad_for(w, kw, stride, padding);
    let mut out = vec![0.0f32; n * oh * ow * cout];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for oc in 0..cout {
                    let mut acc = 0.0f64;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let y = (oy * stride + ky) as isize - pad_top as isize;
                            let x = (ox * stride + kx) as isize - pad_left as isize;
                            if y < 0 || y >= h as isize || x < 0 || x >= w as isize {
                                continue; // zero padding contributes nothing
                            }
                            for ic in 0..cin {
                                let iv = input.at4(b, y as usize, x as usize, ic) as f64;
                                let kv =
                                    kernel.data()[((ky * kw + kx) * cin + ic) * cout + oc] as f64;
                                acc += iv * kv;
                            }
                        }
                    }
                    if let Some(bias) = bias {
                        acc += bias.data()[oc] as f64;
                    }
                    out[((b * oh + oy) * ow + ox) * cout + oc] = acc as f32;
                }
            }
        }
    }
    Tensor::from_values([n, oh, ow, cout], out).unwrap()
}

/// Per-channel spatial convolution, one filter per channel.
pub fn naive_depthwise(input: &Tensor, kernel: &Tensor, stride: usize, padding: Padding) -> Tensor {
    let [n, h, w, c] = [
        input.dims()[0],
        input.dims()[1],
        input.dims()[2],
        input.dims()[3],
    ];
    let [kh, kw, _] = [kernel.dims()[0], kernel.dims()[1], kernel.dims()[2]];
    let (oh, pad_top) = pad_for(h, kh, stride, padding);
    let (ow, pad_left) = pad_for(w, kw, stride, padding);
    let mut out = vec![0.0f32; n * oh * ow * c];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut acc = 0.0f64;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let y = (oy * stride + ky) as isize - pad_top as isize;
                            let x = (ox * stride + kx) as isize - pad_left as isize;
                            if y < 0 || y >= h as isize || x < 0 || x >= w as isize {
                                continue;
                            }
                            let iv = input.at4(b, y as usize, x as usize, ch) as f64;
                            let kv = kernel.data()[(ky * kw + kx) * c + ch] as f64;
                            acc += iv * kv;
                        }
                    }
                    out[((b * oh + oy) * ow + ox) * c + ch] = acc as f32;
                }
            }
        }
    }
    Tensor::from_values([n, oh, ow, c], out).unwrap()
}

/// Depthwise stage followed by a naive 1x1 channel-mixing convolution.
pub fn naive_separable(
    input: &Tensor,
    depthwise: &Tensor,
    pointwise: &Tensor,
    stride: usize,
    padding: Padding,
    bias: Option<&Tensor>,
) -> Tensor {
    let mid = naive_depthwise(input, depthwise, stride, padding);
    naive_conv2d(&mid, pointwise, 1, Padding::Valid, bias)
}

/// Max over each (clipped) window; padding never contributes a value.
pub fn naive_maxpool(input: &Tensor, pool: usize, stride: usize, padding: Padding) -> Tensor {
    let [n, h, w, c] = [
        input.dims()[0],
        input.dims()[1],
        input.dims()[2],
        input.dims()[3],
    ];
    let (oh, pad_top) = pad_for(h, pool, stride, padding);
    let (ow, pad_left) = pad_for(w, pool, stride, padding);
    let mut out = vec![0.0f32; n * oh * ow * c];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = f32::NEG_INFINITY;
                    for ky in 0..pool {
                        for kx in 0..pool {
                            let y = (oy * stride + ky) as isize - pad_top as isize;
                            let x = (ox * stride + kx) as isize - pad_left as isize;
                            if y < 0 || y >= h as isize || x < 0 || x >= w as isize {
                                continue;
                            }
                            best = best.max(input.at4(b, y as usize, x as usize, ch));
                        }
                    }
                    out[((b * oh + oy) * ow + ox) * c + ch] = best;
                }
            }
        }
    }
    Tensor::from_values([n, oh, ow, c], out).unwrap()
}

/// Worst elementwise relative disagreement, with an absolute floor so zeros
/// compare cleanly.
pub fn max_rel_err(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.dims(), b.dims(), "shape mismatch in comparison");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let scale = (x.abs().max(y.abs()) as f64).max(1.0);
            (x as f64 - y as f64).abs() / scale
        })
        .fold(0.0, f64::max)
}

/// Norm-based relative error between two gradient tensors.
pub fn grad_rel_err(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let diff: f64 = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &b)| ((a - b) as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm_a: f64 = analytic
        .data()
        .iter()
        .map(|&a| (a as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm_b: f64 = numeric
        .data()
        .iter()
        .map(|&b| (b as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    diff / (norm_a + norm_b).max(1e-12)
}

pub fn rand_tensor(dims: &[usize], seed: u64, lo: f32, hi: f32) -> Tensor {
    let mut rng = rng::rng_from_seed(seed);
    let n: usize = dims.iter().product();
    let data: Vec<f32> = (0..n)
        .map(|_| lo + (rng::uniform_unit(&mut rng) as f32) * (hi - lo))
        .collect();
    Tensor::from_values(dims.to_vec(), data).unwrap()
}

/// Random tensor whose values keep a margin from zero (for ReLU kinks) and
/// from each other (for pooling argmax ties), so finite differences stay on
/// one side of every non-smooth point.
pub fn rand_tensor_kink_safe(dims: &[usize], seed: u64) -> Tensor {
    let n: usize = dims.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::rng_from_seed(seed);
    rng::shuffle(&mut order, &mut rng);
    let data: Vec<f32> = order
        .into_iter()
        .map(|rank| {
            // distinct values spaced 0.05 apart, straddling zero with a gap
            let v = (rank as f32 - n as f32 / 2.0) * 0.05;
            if v >= 0.0 {
                v + 0.1
            } else {
                v - 0.1
            }
        })
        .collect();
    Tensor::from_values(dims.to_vec(), data).unwrap()
}

/// Weighted-sum readout `L = sum(w . output)` in f64; the cotangent `w` makes
/// the backward seed exact.
pub fn weighted_loss(graph: &Graph, store: &ParameterStore, input: &Tensor, mode: Mode, w: &Tensor) -> f64 {
    let trace = forward(graph, store, input, mode).expect("forward");
    trace
        .output()
        .data()
        .iter()
        .zip(w.data())
        .map(|(&o, &c)| o as f64 * c as f64)
        .sum()
}

pub struct FdCheck {
    /// Worst norm-based relative error over all checked tensors.
    pub worst: f64,
}

/// Compare analytic parameter/input gradients against central finite
/// differences of the weighted-sum loss, step `h`.
pub fn fd_check(graph: &Graph, store: &ParameterStore, input: &Tensor, mode: Mode, h: f32) -> FdCheck {
    let trace = forward(graph, store, input, mode).expect("forward");
    let out_dims = trace.output().dims().to_vec();
    let w = rand_tensor(&out_dims, 0xc0_7a, -1.0, 1.0);
    let grads = backward(graph, store, input, &trace, w.clone()).expect("backward");

    let mut worst = 0.0f64;

    // input gradient
    if let Some(gi) = &grads.input {
        let mut numeric = Tensor::zeros(input.shape().clone());
        for i in 0..input.numel() {
            let mut plus = input.clone();
            plus.data_mut()[i] += h;
            let mut minus = input.clone();
            minus.data_mut()[i] -= h;
            let lp = weighted_loss(graph, store, &plus, mode, &w);
            let lm = weighted_loss(graph, store, &minus, mode, &w);
            numeric.data_mut()[i] = ((lp - lm) / (2.0 * h as f64)) as f32;
        }
        worst = worst.max(grad_rel_err(gi, &numeric));
    }

    // parameter gradients
    for node in 0..store.num_nodes() {
        for slot in 0..store.node_params(node).len() {
            let Some(ga) = &grads.by_node[node][slot] else {
                continue;
            };
            let param = &store.node_params(node)[slot].values;
            let mut numeric = Tensor::zeros(param.shape().clone());
            for i in 0..param.numel() {
                let mut bumped = store.clone();
                bumped.node_params_mut(node)[slot].values.data_mut()[i] += h;
                let lp = weighted_loss(graph, &bumped, input, mode, &w);
                bumped.node_params_mut(node)[slot].values.data_mut()[i] -= 2.0 * h;
                let lm = weighted_loss(graph, &bumped, input, mode, &w);
                numeric.data_mut()[i] = ((lp - lm) / (2.0 * h as f64)) as f32;
            }
            worst = worst.max(grad_rel_err(ga, &numeric));
        }
    }
    FdCheck { worst }
}

/// Deterministic RNG for test-side shape/config draws.
pub fn test_rng(seed: u64) -> impl RngCore {
    rng::rng_from_seed(seed)
}

pub fn pick(rng: &mut impl RngCore, choices: &[usize]) -> usize {
    choices[rng::uniform_index(rng, choices.len())]
}

/// Synthetic linearly separable class images: class k carries a bright
/// quadrant plus low-amplitude noise, over a dark background.
pub fn synthetic_class_images(
    per_class: usize,
    classes: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> (Tensor, Vec<usize>) {
    assert!(classes <= 4, "quadrant patterns support up to 4 classes");
    let n = per_class * classes;
    let mut data = vec![0.0f32; n * h * w * 3];
    let mut labels = Vec::with_capacity(n);
    let mut rng = rng::rng_from_seed(seed);
    for i in 0..n {
        let class = i % classes;
        labels.push(class);
        let (qy, qx) = (class / 2, class % 2);
        for y in 0..h {
            for x in 0..w {
                let in_quadrant =
                    (y < h / 2) == (qy == 0) && (x < w / 2) == (qx == 0);
                let base = if in_quadrant { 0.9 } else { 0.2 };
                let noise = (rng::uniform_unit(&mut rng) as f32 - 0.5) * 0.1;
                let v = (base + noise).clamp(0.0, 1.0);
                let at = ((i * h + y) * w + x) * 3;
                data[at] = v;
                data[at + 1] = v;
                data[at + 2] = v;
            }
        }
    }
    (
        Tensor::from_values([n, h, w, 3], data).unwrap(),
        labels,
    )
}

/// Write a synthetic 4-class PGM dataset plus manifest into `dir`; returns
/// the manifest path.
pub fn write_pgm_dataset(dir: &Path, per_class: usize, size: usize, seed: u64) -> PathBuf {
    use coronet::data::ClassLabel;
    let classes = [
        ClassLabel::Covid19,
        ClassLabel::Normal,
        ClassLabel::PneumoniaBacterial,
        ClassLabel::PneumoniaViral,
    ];
    let mut manifest = String::from("path,label\n");
    let mut rng = rng::rng_from_seed(seed);
    for (k, label) in classes.iter().enumerate() {
        let (qy, qx) = (k / 2, k % 2);
        for i in 0..per_class {
            let mut gray = vec![0u8; size * size];
            for y in 0..size {
                for x in 0..size {
                    let in_quadrant =
                        (y < size / 2) == (qy == 0) && (x < size / 2) == (qx == 0);
                    let base: i32 = if in_quadrant { 230 } else { 50 };
                    let noise = (rng::uniform_index(&mut rng, 21) as i32) - 10;
                    gray[y * size + x] = (base + noise).clamp(0, 255) as u8;
                }
            }
            let name = format!("{}_{i}.pgm", label.as_str().replace('-', "").to_lowercase());
            let bytes = coronet::data::pgm::encode_pgm(&gray, size, size).unwrap();
            std::fs::write(dir.join(&name), bytes).unwrap();
            manifest.push_str(&format!("{name},{label}\n"));
        }
    }
    let manifest_path = dir.join("manifest.csv");
    std::fs::write(&manifest_path, manifest).unwrap();
    manifest_path
}
