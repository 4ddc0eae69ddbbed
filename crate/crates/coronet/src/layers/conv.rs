//! 2-D convolution (cross-correlation) and its depthwise separable
//! factorization.
//!
//! The standard convolution runs as im2col + matmul; 1x1 stride-1 kernels skip
//! the column buffer and go straight to matmul. The depthwise stage is a
//! direct loop with the channel axis innermost. All reductions accumulate in
//! f64 with a fixed order.

use crate::error::{Error, Result};
use crate::layers::{Conv2D, Padding, SeparableConv2D};
use crate::tensor::Tensor;

/// Output extent plus (before, after) padding for one spatial axis.
///
/// `Valid` errors when the kernel exceeds the input. `Same` yields
/// `ceil(input / stride)` with the larger pad on the after side.
pub fn spatial_out(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize, usize)> {
    match padding {
        Padding::Valid => {
            if input < kernel {
                return Err(Error::shape(format!(
                    "kernel extent {kernel} exceeds input extent {input} with valid padding"
                )));
            }
            Ok(((input - kernel) / stride + 1, 0, 0))
        }
        Padding::Same => {
            let out = input.div_ceil(stride);
            let needed = if out == 0 {
                0
            } else {
                ((out - 1) * stride + kernel).saturating_sub(input)
            };
            let before = needed / 2;
            Ok((out, before, needed - before))
        }
    }
}

fn check_image(input: &Tensor, expected_channels: usize, what: &str) -> Result<[usize; 4]> {
    let d = input.dims();
    if d.len() != 4 {
        return Err(Error::shape(format!(
            "{what} expects NxHxWxC input, got {}",
            input.shape()
        )));
    }
    if d[3] != expected_channels {
        return Err(Error::shape(format!(
            "{what} expects {expected_channels} input channels, got {}",
            d[3]
        )));
    }
    Ok([d[0], d[1], d[2], d[3]])
}

/// Lower conv patches into a `[N*OH*OW, kh*kw*C]` matrix, zero-filling the
/// padded border.
fn im2col(
    input: &Tensor,
    kh: usize,
    kw: usize,
    stride: usize,
    pads: (usize, usize),
    out_hw: (usize, usize),
) -> Tensor {
    let [n, h, w, c] = [
        input.dims()[0],
        input.dims()[1],
        input.dims()[2],
        input.dims()[3],
    ];
    let (pad_top, pad_left) = pads;
    let (oh, ow) = out_hw;
    let patch = kh * kw * c;
    let mut cols = vec![0.0f32; n * oh * ow * patch];
    let data = input.data();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((b * oh + oy) * ow + ox) * patch;
                for ky in 0..kh {
                    let y = (oy * stride + ky) as isize - pad_top as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let x = (ox * stride + kx) as isize - pad_left as isize;
                        if x < 0 || x >= w as isize {
                            continue;
                        }
                        let src = ((b * h + y as usize) * w + x as usize) * c;
                        let dst = row + (ky * kw + kx) * c;
                        cols[dst..dst + c].copy_from_slice(&data[src..src + c]);
                    }
                }
            }
        }
    }
    Tensor::from_values([n * oh * ow, patch], cols).expect("im2col layout")
}

/// Scatter a `[N*OH*OW, kh*kw*C]` gradient back onto the input image.
fn col2im(
    grad_cols: &Tensor,
    input_dims: [usize; 4],
    kh: usize,
    kw: usize,
    stride: usize,
    pads: (usize, usize),
    out_hw: (usize, usize),
) -> Tensor {
    let [n, h, w, c] = input_dims;
    let (pad_top, pad_left) = pads;
    let (oh, ow) = out_hw;
    let patch = kh * kw * c;
    let mut acc = vec![0.0f64; n * h * w * c];
    let g = grad_cols.data();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((b * oh + oy) * ow + ox) * patch;
                for ky in 0..kh {
                    let y = (oy * stride + ky) as isize - pad_top as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let x = (ox * stride + kx) as isize - pad_left as isize;
                        if x < 0 || x >= w as isize {
                            continue;
                        }
                        let dst = ((b * h + y as usize) * w + x as usize) * c;
                        let src = row + (ky * kw + kx) * c;
                        for ch in 0..c {
                            acc[dst + ch] += g[src + ch] as f64;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_values(
        input_dims.to_vec(),
        acc.into_iter().map(|v| v as f32).collect(),
    )
    .expect("col2im layout")
}

/// `a^T * b` for `a: [M,K]`, `b: [M,N]` -> `[K,N]`, f64 accumulation.
fn matmul_at_b(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.dims()[0], a.dims()[1]);
    let n = b.dims()[1];
    let mut acc = vec![0.0f64; k * n];
    for row in 0..m {
        let arow = &a.data()[row * k..(row + 1) * k];
        let brow = &b.data()[row * n..(row + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out = &mut acc[i * n..(i + 1) * n];
            for (o, &bv) in out.iter_mut().zip(brow) {
                *o += av as f64 * bv as f64;
            }
        }
    }
    Tensor::from_values([k, n], acc.into_iter().map(|v| v as f32).collect()).expect("a^T b layout")
}

/// `a * b^T` for `a: [M,N]`, `b: [K,N]` -> `[M,K]`, f64 accumulation.
fn matmul_a_bt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, n) = (a.dims()[0], a.dims()[1]);
    let k = b.dims()[0];
    let mut out = vec![0.0f32; m * k];
    for row in 0..m {
        let arow = &a.data()[row * n..(row + 1) * n];
        for col in 0..k {
            let brow = &b.data()[col * n..(col + 1) * n];
            let mut acc = 0.0f64;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av as f64 * bv as f64;
            }
            out[row * k + col] = acc as f32;
        }
    }
    Tensor::from_values([m, k], out).expect("a b^T layout")
}

fn add_bias(out: &mut Tensor, bias: &Tensor) {
    let c = bias.dims()[0];
    let bias = bias.data().to_vec();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v += bias[i % c];
    }
}

fn bias_grad(grad_out: &Tensor, channels: usize) -> Tensor {
    let mut acc = vec![0.0f64; channels];
    for (i, &g) in grad_out.data().iter().enumerate() {
        acc[i % channels] += g as f64;
    }
    Tensor::from_values([channels], acc.into_iter().map(|v| v as f32).collect())
        .expect("bias grad layout")
}

/// Standard 2-D convolution: for each output channel, the kernel slides over
/// the (zero-padded) input and sums the products across both spatial offsets
/// and input channels.
pub fn conv2d_forward(input: &Tensor, spec: &Conv2D, kernel: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let [n, h, w, _] = check_image(input, spec.in_channels, "conv2d")?;
    let expected = [spec.kernel_h, spec.kernel_w, spec.in_channels, spec.out_channels];
    if kernel.dims() != expected {
        return Err(Error::shape(format!(
            "conv kernel shape {} does not match spec {:?}",
            kernel.shape(),
            expected
        )));
    }
    let (oh, pad_top, _) = spatial_out(h, spec.kernel_h, spec.stride, spec.padding)?;
    let (ow, pad_left, _) = spatial_out(w, spec.kernel_w, spec.stride, spec.padding)?;

    let patch = spec.kernel_h * spec.kernel_w * spec.in_channels;
    let kernel_mat = kernel.reshape([patch, spec.out_channels])?;
    let rows = if spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1 && pad_top == 0 && pad_left == 0 {
        // pointwise fast path: patches are exactly the input pixels
        input.reshape([n * h * w, spec.in_channels])?
    } else {
        im2col(
            input,
            spec.kernel_h,
            spec.kernel_w,
            spec.stride,
            (pad_top, pad_left),
            (oh, ow),
        )
    };
    let mut out = rows
        .matmul(&kernel_mat)?
        .reshape([n, oh, ow, spec.out_channels])?;
    if let Some(b) = bias {
        add_bias(&mut out, b);
    }
    Ok(out)
}

/// Gradients of `conv2d_forward` w.r.t. input, kernel and bias.
pub fn conv2d_backward(
    input: &Tensor,
    spec: &Conv2D,
    kernel: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Option<Tensor>)> {
    let [n, h, w, _] = check_image(input, spec.in_channels, "conv2d")?;
    let (oh, pad_top, _) = spatial_out(h, spec.kernel_h, spec.stride, spec.padding)?;
    let (ow, pad_left, _) = spatial_out(w, spec.kernel_w, spec.stride, spec.padding)?;
    let patch = spec.kernel_h * spec.kernel_w * spec.in_channels;

    let g = grad_out.reshape([n * oh * ow, spec.out_channels])?;
    let cols = im2col(
        input,
        spec.kernel_h,
        spec.kernel_w,
        spec.stride,
        (pad_top, pad_left),
        (oh, ow),
    );
    let grad_kernel = matmul_at_b(&cols, &g).reshape([
        spec.kernel_h,
        spec.kernel_w,
        spec.in_channels,
        spec.out_channels,
    ])?;
    let kernel_mat = kernel.reshape([patch, spec.out_channels])?;
    let grad_cols = matmul_a_bt(&g, &kernel_mat);
    let grad_input = col2im(
        &grad_cols,
        [n, h, w, spec.in_channels],
        spec.kernel_h,
        spec.kernel_w,
        spec.stride,
        (pad_top, pad_left),
        (oh, ow),
    );
    let grad_bias = spec.use_bias.then(|| bias_grad(grad_out, spec.out_channels));
    Ok((grad_input, grad_kernel, grad_bias))
}

/// Per-channel spatial convolution: channel `c` of the output is channel `c`
/// of the input convolved with its own `kh x kw` filter.
pub fn depthwise_forward(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    let d = input.dims();
    let [n, h, w, c] = [d[0], d[1], d[2], d[3]];
    let (kh, kw) = (kernel.dims()[0], kernel.dims()[1]);
    if kernel.dims()[2] != c {
        return Err(Error::shape(format!(
            "depthwise kernel covers {} channels, input has {}",
            kernel.dims()[2],
            c
        )));
    }
    let (oh, pad_top, _) = spatial_out(h, kh, stride, padding)?;
    let (ow, pad_left, _) = spatial_out(w, kw, stride, padding)?;
    let mut out = vec![0.0f32; n * oh * ow * c];
    let mut acc = vec![0.0f64; c];
    let x = input.data();
    let k = kernel.data();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                acc.iter_mut().for_each(|v| *v = 0.0);
                for ky in 0..kh {
                    let y = (oy * stride + ky) as isize - pad_top as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let xcoord = (ox * stride + kx) as isize - pad_left as isize;
                        if xcoord < 0 || xcoord >= w as isize {
                            continue;
                        }
                        let src = ((b * h + y as usize) * w + xcoord as usize) * c;
                        let kidx = (ky * kw + kx) * c;
                        for ch in 0..c {
                            acc[ch] += x[src + ch] as f64 * k[kidx + ch] as f64;
                        }
                    }
                }
                let dst = ((b * oh + oy) * ow + ox) * c;
                for ch in 0..c {
                    out[dst + ch] = acc[ch] as f32;
                }
            }
        }
    }
    Tensor::from_values([n, oh, ow, c], out)
}

/// Gradients of `depthwise_forward` w.r.t. input and kernel.
pub fn depthwise_backward(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: Padding,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let d = input.dims();
    let [n, h, w, c] = [d[0], d[1], d[2], d[3]];
    let (kh, kw) = (kernel.dims()[0], kernel.dims()[1]);
    let (oh, pad_top, _) = spatial_out(h, kh, stride, padding)?;
    let (ow, pad_left, _) = spatial_out(w, kw, stride, padding)?;
    let mut gi = vec![0.0f64; n * h * w * c];
    let mut gk = vec![0.0f64; kh * kw * c];
    let x = input.data();
    let k = kernel.data();
    let g = grad_out.data();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let gidx = ((b * oh + oy) * ow + ox) * c;
                for ky in 0..kh {
                    let y = (oy * stride + ky) as isize - pad_top as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let xcoord = (ox * stride + kx) as isize - pad_left as isize;
                        if xcoord < 0 || xcoord >= w as isize {
                            continue;
                        }
                        let src = ((b * h + y as usize) * w + xcoord as usize) * c;
                        let kidx = (ky * kw + kx) * c;
                        for ch in 0..c {
                            let gv = g[gidx + ch] as f64;
                            gi[src + ch] += gv * k[kidx + ch] as f64;
                            gk[kidx + ch] += gv * x[src + ch] as f64;
                        }
                    }
                }
            }
        }
    }
    let grad_input = Tensor::from_values(
        [n, h, w, c],
        gi.into_iter().map(|v| v as f32).collect::<Vec<_>>(),
    )?;
    let grad_kernel = Tensor::from_values(
        [kh, kw, c],
        gk.into_iter().map(|v| v as f32).collect::<Vec<_>>(),
    )?;
    Ok((grad_input, grad_kernel))
}

fn pointwise_spec(spec: &SeparableConv2D) -> Conv2D {
    Conv2D {
        in_channels: spec.in_channels,
        out_channels: spec.out_channels,
        kernel_h: 1,
        kernel_w: 1,
        stride: 1,
        padding: Padding::Valid,
        use_bias: spec.use_bias,
    }
}

/// Depthwise spatial convolution followed by a 1x1 pointwise convolution that
/// mixes channels. Stride and padding apply to the depthwise stage.
pub fn separable_forward(
    input: &Tensor,
    spec: &SeparableConv2D,
    depthwise_kernel: &Tensor,
    pointwise_kernel: &Tensor,
    bias: Option<&Tensor>,
) -> Result<(Tensor, Tensor)> {
    check_image(input, spec.in_channels, "separable conv")?;
    let mid = depthwise_forward(input, depthwise_kernel, spec.stride, spec.padding)?;
    let out = conv2d_forward(&mid, &pointwise_spec(spec), pointwise_kernel, bias)?;
    Ok((out, mid))
}

/// Gradients of `separable_forward`; `mid` is the cached depthwise output.
#[allow(clippy::type_complexity)]
pub fn separable_backward(
    input: &Tensor,
    spec: &SeparableConv2D,
    depthwise_kernel: &Tensor,
    pointwise_kernel: &Tensor,
    mid: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor, Option<Tensor>)> {
    let (grad_mid, grad_pointwise, grad_bias) =
        conv2d_backward(mid, &pointwise_spec(spec), pointwise_kernel, grad_out)?;
    let (grad_input, grad_depthwise) =
        depthwise_backward(input, depthwise_kernel, spec.stride, spec.padding, &grad_mid)?;
    Ok((grad_input, grad_depthwise, grad_pointwise, grad_bias))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_spec(cin: usize, cout: usize, k: usize, stride: usize, padding: Padding) -> Conv2D {
        Conv2D {
            in_channels: cin,
            out_channels: cout,
            kernel_h: k,
            kernel_w: k,
            stride,
            padding,
            use_bias: false,
        }
    }

    #[test]
    fn all_ones_kernel_sums_windows() {
        let input = Tensor::from_values(
            [1, 3, 3, 1],
            vec![1., 2., 3., 4., 5., 6., 7., 8., 9.],
        )
        .unwrap();
        let kernel = Tensor::full([2, 2, 1, 1], 1.0);
        let out = conv2d_forward(&input, &conv_spec(1, 1, 2, 1, Padding::Valid), &kernel, None)
            .unwrap();
        assert_eq!(out.dims(), &[1, 2, 2, 1]);
        assert_eq!(out.data(), &[12., 16., 24., 28.]);
    }

    #[test]
    fn one_by_one_identity_kernel_passes_input_through() {
        let input = Tensor::from_values([1, 2, 2, 1], vec![0.5, -1.0, 2.0, 3.0]).unwrap();
        let kernel = Tensor::full([1, 1, 1, 1], 1.0);
        let out = conv2d_forward(&input, &conv_spec(1, 1, 1, 1, Padding::Valid), &kernel, None)
            .unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn zero_kernel_annihilates() {
        let input = Tensor::full([2, 4, 4, 3], 7.0);
        let kernel = Tensor::zeros([3, 3, 3, 5]);
        let out = conv2d_forward(&input, &conv_spec(3, 5, 3, 1, Padding::Same), &kernel, None)
            .unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let input = Tensor::zeros([1, 4, 4, 2]);
        let kernel = Tensor::zeros([3, 3, 3, 5]);
        let err = conv2d_forward(&input, &conv_spec(3, 5, 3, 1, Padding::Valid), &kernel, None)
            .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn kernel_larger_than_input_is_shape_error() {
        let input = Tensor::zeros([1, 2, 2, 1]);
        let kernel = Tensor::zeros([3, 3, 1, 1]);
        let err = conv2d_forward(&input, &conv_spec(1, 1, 3, 1, Padding::Valid), &kernel, None)
            .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn same_padding_splits_extra_to_the_end() {
        // input 10, kernel 3, stride 2: out 5, pad_needed 1 -> (0 before, 1 after)
        assert_eq!(spatial_out(10, 3, 2, Padding::Same).unwrap(), (5, 0, 1));
        // input 77, kernel 3, stride 2: out 39, pad_needed 2 -> split evenly
        assert_eq!(spatial_out(77, 3, 2, Padding::Same).unwrap(), (39, 1, 1));
    }

    #[test]
    fn separable_identity_factorization() {
        // center-delta depthwise + identity pointwise leaves the input unchanged
        let c = 3;
        let input = Tensor::from_values(
            [1, 2, 2, c],
            (0..2 * 2 * c).map(|i| i as f32 * 0.25 - 1.0).collect(),
        )
        .unwrap();
        let mut dk = Tensor::zeros([3, 3, c]);
        for ch in 0..c {
            dk.data_mut()[(3 + 1) * c + ch] = 1.0; // center tap of the 3x3 filter
        }
        let pw = Tensor::identity(c).reshape([1, 1, c, c]).unwrap();
        let spec = SeparableConv2D {
            in_channels: c,
            out_channels: c,
            kernel_h: 3,
            kernel_w: 3,
            stride: 1,
            padding: Padding::Same,
            use_bias: false,
        };
        let (out, _) = separable_forward(&input, &spec, &dk, &pw, None).unwrap();
        assert_eq!(out.dims(), input.dims());
        for (a, b) in out.data().iter().zip(input.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
