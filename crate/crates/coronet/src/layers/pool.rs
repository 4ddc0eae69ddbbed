//! Max pooling and global average pooling.

use crate::error::{Error, Result};
use crate::layers::conv::spatial_out;
use crate::layers::MaxPool2D;
use crate::tensor::Tensor;

/// Max pooling. With `Same` padding the window is clipped to the valid input
/// region (padding never contributes a value), matching the convention of the
/// reference backbone.
pub fn maxpool2d_forward(input: &Tensor, spec: &MaxPool2D) -> Result<(Tensor, Vec<usize>)> {
    let d = input.dims();
    if d.len() != 4 {
        return Err(Error::shape(format!(
            "max pool expects NxHxWxC input, got {}",
            input.shape()
        )));
    }
    let [n, h, w, c] = [d[0], d[1], d[2], d[3]];
    let (oh, pad_top, _) = spatial_out(h, spec.pool_h, spec.stride, spec.padding)?;
    let (ow, pad_left, _) = spatial_out(w, spec.pool_w, spec.stride, spec.padding)?;
    let x = input.data();
    let mut out = vec![0.0f32; n * oh * ow * c];
    let mut argmax = vec![0usize; n * oh * ow * c];
    for b in 0..n {
        for oy in 0..oh {
            let y0 = (oy * spec.stride) as isize - pad_top as isize;
            for ox in 0..ow {
                let x0 = (ox * spec.stride) as isize - pad_left as isize;
                let dst = ((b * oh + oy) * ow + ox) * c;
                for ch in 0..c {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for ky in 0..spec.pool_h {
                        let y = y0 + ky as isize;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        for kx in 0..spec.pool_w {
                            let xx = x0 + kx as isize;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            let idx = ((b * h + y as usize) * w + xx as usize) * c + ch;
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out[dst + ch] = best;
                    argmax[dst + ch] = best_idx;
                }
            }
        }
    }
    let out = Tensor::from_values([n, oh, ow, c], out)?;
    Ok((out, argmax))
}

/// Route each output gradient back to the input cell that won its window.
pub fn maxpool2d_backward(input_dims: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let mut grad = vec![0.0f32; input_dims.iter().product()];
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        grad[idx] += g;
    }
    Tensor::from_values(input_dims.to_vec(), grad).expect("pool grad layout")
}

/// Mean over the spatial axes: `[N,H,W,C] -> [N,C]`.
pub fn global_avg_pool_forward(input: &Tensor) -> Result<Tensor> {
    let d = input.dims();
    if d.len() != 4 {
        return Err(Error::shape(format!(
            "global average pool expects NxHxWxC input, got {}",
            input.shape()
        )));
    }
    let [n, h, w, c] = [d[0], d[1], d[2], d[3]];
    if h * w == 0 {
        return Err(Error::shape(
            "global average pool on empty spatial extent".to_string(),
        ));
    }
    let x = input.data();
    let mut out = vec![0.0f32; n * c];
    let inv = 1.0 / (h * w) as f64;
    for b in 0..n {
        let mut acc = vec![0.0f64; c];
        for p in 0..h * w {
            let src = (b * h * w + p) * c;
            for ch in 0..c {
                acc[ch] += x[src + ch] as f64;
            }
        }
        for ch in 0..c {
            out[b * c + ch] = (acc[ch] * inv) as f32;
        }
    }
    Tensor::from_values([n, c], out)
}

pub fn global_avg_pool_backward(input_dims: &[usize], grad_out: &Tensor) -> Tensor {
    let [n, h, w, c] = [input_dims[0], input_dims[1], input_dims[2], input_dims[3]];
    let inv = 1.0 / (h * w) as f32;
    let g = grad_out.data();
    let mut grad = vec![0.0f32; n * h * w * c];
    for b in 0..n {
        for p in 0..h * w {
            let dst = (b * h * w + p) * c;
            for ch in 0..c {
                grad[dst + ch] = g[b * c + ch] * inv;
            }
        }
    }
    Tensor::from_values(input_dims.to_vec(), grad).expect("gap grad layout")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Padding;

    fn pool(k: usize, stride: usize, padding: Padding) -> MaxPool2D {
        MaxPool2D {
            pool_h: k,
            pool_w: k,
            stride,
            padding,
        }
    }

    #[test]
    fn two_by_two_window_takes_maximum() {
        let input = Tensor::from_values([1, 2, 2, 1], vec![1., 2., 3., 4.]).unwrap();
        let (out, _) = maxpool2d_forward(&input, &pool(2, 2, Padding::Valid)).unwrap();
        assert_eq!(out.dims(), &[1, 1, 1, 1]);
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn constant_input_stays_constant() {
        let input = Tensor::full([1, 4, 4, 2], 3.25);
        let (out, _) = maxpool2d_forward(&input, &pool(2, 2, Padding::Valid)).unwrap();
        assert!(out.data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn strided_window_enumeration() {
        let input = Tensor::from_values([1, 1, 4, 1], vec![1., 3., 2., 4.]).unwrap();
        let spec = MaxPool2D {
            pool_h: 1,
            pool_w: 2,
            stride: 2,
            padding: Padding::Valid,
        };
        let (out, _) = maxpool2d_forward(&input, &spec).unwrap();
        assert_eq!(out.data(), &[3.0, 4.0]);
    }

    #[test]
    fn window_larger_than_input_is_shape_error() {
        let input = Tensor::zeros([1, 2, 2, 1]);
        let err = maxpool2d_forward(&input, &pool(3, 1, Padding::Valid)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn backward_routes_to_window_winner() {
        let input = Tensor::from_values([1, 2, 2, 1], vec![1., 2., 3., 4.]).unwrap();
        let (_, argmax) = maxpool2d_forward(&input, &pool(2, 2, Padding::Valid)).unwrap();
        let grad_out = Tensor::from_values([1, 1, 1, 1], vec![5.0]).unwrap();
        let grad = maxpool2d_backward(input.dims(), &argmax, &grad_out);
        assert_eq!(grad.data(), &[0., 0., 0., 5.]);
    }

    #[test]
    fn global_average_is_spatial_mean() {
        let input = Tensor::from_values([1, 2, 2, 1], vec![1., 2., 3., 6.]).unwrap();
        let out = global_avg_pool_forward(&input).unwrap();
        assert_eq!(out.dims(), &[1, 1]);
        assert!((out.data()[0] - 3.0).abs() < 1e-7);
    }
}
