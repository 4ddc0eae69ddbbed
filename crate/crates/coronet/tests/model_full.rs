//! Full-scale model checks that are worth their runtime: one forward pass
//! through the complete backbone and the accounting identity under freezing.

mod common;

use common::*;
use coronet::model::{build_coronet, count_parameters, predict, ArchitectureConfig, Variant};

#[test]
fn full_variant_forward_yields_a_stochastic_vector() {
    let config = ArchitectureConfig::new(Variant::Full, 4).with_input(160, 160);
    let (graph, store) = build_coronet(&config, 2024).unwrap();
    let image = rand_tensor(&[1, 160, 160, 3], 55, 0.0, 1.0);
    let (probs, labels) = predict(&graph, &store, &image).unwrap();
    assert_eq!(probs.dims(), &[1, 4]);
    assert_eq!(labels.len(), 1);
    let sum: f64 = probs.data().iter().map(|&p| p as f64).sum();
    assert!((sum - 1.0).abs() < 1e-6, "row sums to {sum}");
    // untrained logits can be spread wide enough that tail entries underflow
    // to 0; a stochastic vector needs non-negative entries and unit mass
    assert!(probs.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    assert!(labels[0] < 4);
}

#[test]
fn total_splits_into_trainable_plus_non_trainable_everywhere() {
    for (variant, classes, input) in [
        (Variant::Full, 4, 160),
        (Variant::Full, 2, 224),
        (Variant::Mini, 3, 64),
        (Variant::Mini, 4, 32),
    ] {
        let config = ArchitectureConfig::new(variant, classes).with_input(input, input);
        let graph = coronet::model::build_coronet_graph(&config).unwrap();
        let (count, _) = count_parameters(&graph).unwrap();
        assert_eq!(count.total, count.trainable + count.non_trainable);
    }
}
