//! Batch normalization over the channel (innermost) axis.

use crate::error::{Error, Result};
use crate::layers::BatchNorm;
use crate::tensor::Tensor;

/// Per-channel batch statistics captured during a train-mode forward pass;
/// needed both for the backward pass and for the moving-average update.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f32>,
    pub variance: Vec<f32>, // biased (divide by m)
}

/// New moving statistics produced by a train-mode forward pass. The caller
/// (the training loop) owns applying them to the parameter store, which keeps
/// the forward pass itself pure.
#[derive(Debug, Clone)]
pub struct MovingUpdate {
    pub moving_mean: Tensor,
    pub moving_variance: Tensor,
}

fn channel_stats(input: &Tensor, channels: usize) -> Result<BatchStats> {
    let n = input.numel();
    if n == 0 {
        return Err(Error::input(
            "batch norm in train mode on an empty batch".to_string(),
        ));
    }
    let m = n / channels;
    let mut mean = vec![0.0f64; channels];
    for (i, &v) in input.data().iter().enumerate() {
        mean[i % channels] += v as f64;
    }
    for v in mean.iter_mut() {
        *v /= m as f64;
    }
    let mut var = vec![0.0f64; channels];
    for (i, &v) in input.data().iter().enumerate() {
        let d = v as f64 - mean[i % channels];
        var[i % channels] += d * d;
    }
    for v in var.iter_mut() {
        *v /= m as f64;
    }
    Ok(BatchStats {
        mean: mean.into_iter().map(|v| v as f32).collect(),
        variance: var.into_iter().map(|v| v as f32).collect(),
    })
}

fn normalize(
    input: &Tensor,
    mean: &[f32],
    variance: &[f32],
    gamma: &Tensor,
    beta: &Tensor,
    epsilon: f32,
) -> Tensor {
    let c = mean.len();
    let inv_std: Vec<f64> = variance
        .iter()
        .map(|&v| 1.0 / (v as f64 + epsilon as f64).sqrt())
        .collect();
    let g = gamma.data();
    let b = beta.data();
    let data = input
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let ch = i % c;
            let xhat = (x as f64 - mean[ch] as f64) * inv_std[ch];
            (xhat * g[ch] as f64 + b[ch] as f64) as f32
        })
        .collect();
    Tensor::from_values(input.shape().clone(), data).expect("same shape")
}

/// Train-mode forward: normalize with batch statistics and report the updated
/// moving averages (`new = momentum * old + (1 - momentum) * batch`).
pub fn batchnorm_forward_train(
    input: &Tensor,
    spec: &BatchNorm,
    gamma: &Tensor,
    beta: &Tensor,
    moving_mean: &Tensor,
    moving_variance: &Tensor,
) -> Result<(Tensor, BatchStats, MovingUpdate)> {
    check_channels(input, spec)?;
    let stats = channel_stats(input, spec.channels)?;
    let out = normalize(input, &stats.mean, &stats.variance, gamma, beta, spec.epsilon);
    let mom = spec.momentum as f64;
    let blend = |old: &Tensor, new: &[f32]| {
        let data: Vec<f32> = old
            .data()
            .iter()
            .zip(new)
            .map(|(&o, &n)| (mom * o as f64 + (1.0 - mom) * n as f64) as f32)
            .collect();
        Tensor::from_values([new.len()], data).expect("channel vector")
    };
    let update = MovingUpdate {
        moving_mean: blend(moving_mean, &stats.mean),
        moving_variance: blend(moving_variance, &stats.variance),
    };
    Ok((out, stats, update))
}

/// Inference-mode forward: normalize with the stored moving statistics.
pub fn batchnorm_forward_infer(
    input: &Tensor,
    spec: &BatchNorm,
    gamma: &Tensor,
    beta: &Tensor,
    moving_mean: &Tensor,
    moving_variance: &Tensor,
) -> Result<Tensor> {
    check_channels(input, spec)?;
    Ok(normalize(
        input,
        moving_mean.data(),
        moving_variance.data(),
        gamma,
        beta,
        spec.epsilon,
    ))
}

fn check_channels(input: &Tensor, spec: &BatchNorm) -> Result<()> {
    match input.dims().last() {
        Some(&c) if c == spec.channels => Ok(()),
        other => Err(Error::shape(format!(
            "batch norm expects {} channels, got {:?}",
            spec.channels, other
        ))),
    }
}

/// Train-mode gradients. The batch statistics depend on the input, so the
/// gradient carries the usual correction terms:
/// `dx = gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat))`.
pub fn batchnorm_backward_train(
    input: &Tensor,
    spec: &BatchNorm,
    gamma: &Tensor,
    stats: &BatchStats,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let c = spec.channels;
    let m = (input.numel() / c) as f64;
    let inv_std: Vec<f64> = stats
        .variance
        .iter()
        .map(|&v| 1.0 / (v as f64 + spec.epsilon as f64).sqrt())
        .collect();

    let x = input.data();
    let g = grad_out.data();
    let mut sum_g = vec![0.0f64; c];
    let mut sum_gx = vec![0.0f64; c];
    for (i, (&gv, &xv)) in g.iter().zip(x).enumerate() {
        let ch = i % c;
        let xhat = (xv as f64 - stats.mean[ch] as f64) * inv_std[ch];
        sum_g[ch] += gv as f64;
        sum_gx[ch] += gv as f64 * xhat;
    }

    let gdata = gamma.data();
    let mut grad_input = vec![0.0f32; input.numel()];
    for (i, (&gv, &xv)) in g.iter().zip(x).enumerate() {
        let ch = i % c;
        let xhat = (xv as f64 - stats.mean[ch] as f64) * inv_std[ch];
        let centered = gv as f64 - sum_g[ch] / m - xhat * sum_gx[ch] / m;
        grad_input[i] = (gdata[ch] as f64 * inv_std[ch] * centered) as f32;
    }

    let grad_gamma = Tensor::from_values([c], sum_gx.iter().map(|&v| v as f32).collect::<Vec<_>>())?;
    let grad_beta = Tensor::from_values([c], sum_g.iter().map(|&v| v as f32).collect::<Vec<_>>())?;
    Ok((
        Tensor::from_values(input.shape().clone(), grad_input)?,
        grad_gamma,
        grad_beta,
    ))
}

/// Inference-mode gradients: moving statistics are constants, so the input
/// gradient is a per-channel scale.
pub fn batchnorm_backward_infer(
    input: &Tensor,
    spec: &BatchNorm,
    gamma: &Tensor,
    moving_mean: &Tensor,
    moving_variance: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let c = spec.channels;
    let inv_std: Vec<f64> = moving_variance
        .data()
        .iter()
        .map(|&v| 1.0 / (v as f64 + spec.epsilon as f64).sqrt())
        .collect();
    let mm = moving_mean.data();
    let x = input.data();
    let g = grad_out.data();
    let gdata = gamma.data();
    let mut sum_g = vec![0.0f64; c];
    let mut sum_gx = vec![0.0f64; c];
    let mut grad_input = vec![0.0f32; input.numel()];
    for (i, (&gv, &xv)) in g.iter().zip(x).enumerate() {
        let ch = i % c;
        let xhat = (xv as f64 - mm[ch] as f64) * inv_std[ch];
        sum_g[ch] += gv as f64;
        sum_gx[ch] += gv as f64 * xhat;
        grad_input[i] = (gv as f64 * gdata[ch] as f64 * inv_std[ch]) as f32;
    }
    let grad_gamma = Tensor::from_values([c], sum_gx.iter().map(|&v| v as f32).collect::<Vec<_>>())?;
    let grad_beta = Tensor::from_values([c], sum_g.iter().map(|&v| v as f32).collect::<Vec<_>>())?;
    Ok((
        Tensor::from_values(input.shape().clone(), grad_input)?,
        grad_gamma,
        grad_beta,
    ))
}
