//! Inverted dropout: inference is a pure identity, train mode zeroes each
//! element with probability `rate` and scales survivors by `1/(1-rate)`.

use crate::layers::Dropout;
use crate::rng;
use crate::tensor::Tensor;

/// Train-mode dropout. Returns the output and the applied multiplier mask
/// (0 or `1/(1-rate)` per element), which the backward pass reuses.
pub fn dropout_forward_train(input: &Tensor, spec: &Dropout, seed: u64) -> (Tensor, Vec<f32>) {
    if spec.rate <= 0.0 {
        return (input.clone(), vec![1.0; input.numel()]);
    }
    if spec.rate >= 1.0 {
        return (Tensor::zeros(input.shape().clone()), vec![0.0; input.numel()]);
    }
    let mut rng = rng::rng_from_seed(seed);
    let keep_scale = (1.0 / (1.0 - spec.rate)) as f32;
    let mask: Vec<f32> = (0..input.numel())
        .map(|_| {
            if rng::uniform_unit(&mut rng) < spec.rate {
                0.0
            } else {
                keep_scale
            }
        })
        .collect();
    let data = input
        .data()
        .iter()
        .zip(&mask)
        .map(|(&x, &m)| x * m)
        .collect();
    let out = Tensor::from_values(input.shape().clone(), data).expect("same shape");
    (out, mask)
}

/// Gradient through the same mask.
pub fn dropout_backward(mask: &[f32], grad_out: &Tensor) -> Tensor {
    let data = grad_out
        .data()
        .iter()
        .zip(mask)
        .map(|(&g, &m)| g * m)
        .collect();
    Tensor::from_values(grad_out.shape().clone(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_zero_is_identity() {
        let x = Tensor::from_values([4], vec![1., -2., 3., 4.]).unwrap();
        let (out, _) = dropout_forward_train(&x, &Dropout { rate: 0.0 }, 1);
        assert_eq!(out, x);
    }

    #[test]
    fn rate_one_zeroes_everything() {
        let x = Tensor::full([8], 2.0);
        let (out, _) = dropout_forward_train(&x, &Dropout { rate: 1.0 }, 1);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_mask() {
        let x = Tensor::full([64], 1.0);
        let (a, _) = dropout_forward_train(&x, &Dropout { rate: 0.5 }, 7);
        let (b, _) = dropout_forward_train(&x, &Dropout { rate: 0.5 }, 7);
        assert_eq!(a, b);
    }

    #[test]
    fn inverted_scaling_preserves_mass_in_expectation() {
        // total mass over a 10,000-element tensor stays within 2% per seed
        let n = 10_000;
        let x = Tensor::full([n], 1.0);
        for seed in 0..5 {
            let (out, _) = dropout_forward_train(&x, &Dropout { rate: 0.5 }, seed);
            let mass: f64 = out.data().iter().map(|&v| v as f64).sum();
            let rel = (mass - n as f64).abs() / n as f64;
            assert!(rel < 0.02, "seed {seed}: relative mass error {rel}");
        }
    }
}
