//! ReLU and softmax.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `max(0, x)` elementwise.
pub fn relu(input: &Tensor) -> Tensor {
    input.map(|x| if x > 0.0 { x } else { 0.0 })
}

/// Gradient: passes where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_values(input.shape().clone(), data).expect("same shape")
}

/// Exponential normalization along the last axis, with max-subtraction so
/// large logits cannot overflow. Each row sums to 1.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let dims = logits.dims();
    let n = *dims
        .last()
        .ok_or_else(|| Error::shape("softmax requires rank >= 1".to_string()))?;
    if n == 0 {
        return Err(Error::shape("softmax over an empty axis".to_string()));
    }
    let rows = logits.numel() / n;
    let x = logits.data();
    let mut out = vec![0.0f32; logits.numel()];
    for r in 0..rows {
        let row = &x[r * n..(r + 1) * n];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut denom = 0.0f64;
        for &v in row {
            denom += ((v - max) as f64).exp();
        }
        for (i, &v) in row.iter().enumerate() {
            out[r * n + i] = (((v - max) as f64).exp() / denom) as f32;
        }
    }
    Tensor::from_values(logits.shape().clone(), out)
}

/// Gradient through softmax given its own output `y`:
/// `dx_k = y_k * (g_k - sum_j g_j * y_j)` per row.
pub fn softmax_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    let n = *output.dims().last().expect("softmax output rank >= 1");
    let rows = output.numel() / n;
    let y = output.data();
    let g = grad_out.data();
    let mut grad = vec![0.0f32; output.numel()];
    for r in 0..rows {
        let base = r * n;
        let mut dot = 0.0f64;
        for i in 0..n {
            dot += g[base + i] as f64 * y[base + i] as f64;
        }
        for i in 0..n {
            grad[base + i] = (y[base + i] as f64 * (g[base + i] as f64 - dot)) as f32;
        }
    }
    Tensor::from_values(output.shape().clone(), grad).expect("same shape")
}
