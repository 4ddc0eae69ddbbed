//! Fully connected layer.

use crate::error::{Error, Result};
use crate::layers::Dense;
use crate::tensor::Tensor;

/// `out = input * W + b` for `input: [N, in]`, `W: [in, out]`.
pub fn dense_forward(
    input: &Tensor,
    spec: &Dense,
    weight: &Tensor,
    bias: Option<&Tensor>,
) -> Result<Tensor> {
    let d = input.dims();
    if d.len() != 2 || d[1] != spec.in_features {
        return Err(Error::shape(format!(
            "dense expects [N, {}] input, got {}",
            spec.in_features,
            input.shape()
        )));
    }
    let mut out = input.matmul(weight)?;
    if let Some(b) = bias {
        let cols = spec.out_features;
        let bias = b.data().to_vec();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += bias[i % cols];
        }
    }
    Ok(out)
}

/// Gradients w.r.t. input, weight and bias.
pub fn dense_backward(
    input: &Tensor,
    spec: &Dense,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Option<Tensor>)> {
    let n = input.dims()[0];
    let (fin, fout) = (spec.in_features, spec.out_features);
    let g = grad_out.data();
    let x = input.data();

    // grad_weight = input^T * grad_out
    let mut gw = vec![0.0f64; fin * fout];
    for row in 0..n {
        for i in 0..fin {
            let xv = x[row * fin + i] as f64;
            if xv == 0.0 {
                continue;
            }
            let grow = &g[row * fout..(row + 1) * fout];
            let out = &mut gw[i * fout..(i + 1) * fout];
            for (o, &gv) in out.iter_mut().zip(grow) {
                *o += xv * gv as f64;
            }
        }
    }
    let grad_weight =
        Tensor::from_values([fin, fout], gw.into_iter().map(|v| v as f32).collect::<Vec<_>>())?;

    // grad_input = grad_out * W^T
    let wdata = weight.data();
    let mut gi = vec![0.0f32; n * fin];
    for row in 0..n {
        let grow = &g[row * fout..(row + 1) * fout];
        for i in 0..fin {
            let wrow = &wdata[i * fout..(i + 1) * fout];
            let mut acc = 0.0f64;
            for (&gv, &wv) in grow.iter().zip(wrow) {
                acc += gv as f64 * wv as f64;
            }
            gi[row * fin + i] = acc as f32;
        }
    }
    let grad_input = Tensor::from_values([n, fin], gi)?;

    let grad_bias = spec.use_bias.then(|| {
        let mut acc = vec![0.0f64; fout];
        for row in 0..n {
            for j in 0..fout {
                acc[j] += g[row * fout + j] as f64;
            }
        }
        Tensor::from_values([fout], acc.into_iter().map(|v| v as f32).collect::<Vec<_>>())
            .expect("bias grad layout")
    });
    Ok((grad_input, grad_weight, grad_bias))
}
