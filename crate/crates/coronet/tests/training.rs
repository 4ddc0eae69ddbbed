//! Training-loop contracts: determinism, the no-op run, fine-tuning head
//! swaps, backbone freezing and the partial weights-loading workflow.

mod common;

use common::*;
use coronet::graph::{backward, forward, Mode};
use coronet::model::{
    build_coronet, count_parameters, load_weights, save_weights_subset, ArchitectureConfig,
    Variant,
};
use coronet::train::{cross_entropy_grad, fine_tune, fit, TrainConfig};

fn mini_config(classes: usize) -> ArchitectureConfig {
    ArchitectureConfig::new(Variant::Mini, classes).with_input(16, 16)
}

fn quick_train_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        batch_size: 4,
        epochs,
        shuffle_each_epoch: true,
        rng_seed: seed,
        freeze_backbone: false,
    }
}

#[test]
fn zero_epochs_changes_nothing() {
    let (graph, mut store) = build_coronet(&mini_config(4), 1).unwrap();
    let before = store.clone();
    let (images, labels) = synthetic_class_images(2, 4, 16, 16, 5);
    let history = fit(
        &graph,
        &mut store,
        &images,
        &labels,
        None,
        &quick_train_config(1, 0),
    )
    .unwrap();
    assert!(history.is_empty());
    for id in 0..store.num_nodes() {
        assert_eq!(store.node_params(id), before.node_params(id));
    }
}

#[test]
fn empty_dataset_is_input_error() {
    let (graph, mut store) = build_coronet(&mini_config(4), 1).unwrap();
    let images = coronet::tensor::Tensor::zeros([0, 16, 16, 3]);
    let err = fit(
        &graph,
        &mut store,
        &images,
        &[],
        None,
        &quick_train_config(1, 1),
    )
    .unwrap_err();
    assert!(matches!(err, coronet::error::Error::Input(_)));
}

#[test]
fn same_seed_gives_bitwise_identical_run() {
    let (images, labels) = synthetic_class_images(3, 4, 16, 16, 5);
    let mut results = Vec::new();
    for _ in 0..2 {
        let (graph, mut store) = build_coronet(&mini_config(4), 11).unwrap();
        let history = fit(
            &graph,
            &mut store,
            &images,
            &labels,
            Some((&images, &labels)),
            &quick_train_config(11, 3),
        )
        .unwrap();
        results.push((history, store));
    }
    let (h1, s1) = &results[0];
    let (h2, s2) = &results[1];
    assert_eq!(h1, h2, "histories diverged");
    for id in 0..s1.num_nodes() {
        assert_eq!(s1.node_params(id), s2.node_params(id), "node {id} diverged");
    }
}

#[test]
fn label_out_of_head_range_is_input_error() {
    let (graph, mut store) = build_coronet(&mini_config(3), 1).unwrap();
    let (images, _) = synthetic_class_images(1, 4, 16, 16, 5);
    let labels = vec![0usize, 1, 2, 3]; // 3 is outside a 3-way head
    let err = fit(
        &graph,
        &mut store,
        &images,
        &labels,
        None,
        &quick_train_config(1, 1),
    )
    .unwrap_err();
    assert!(matches!(err, coronet::error::Error::Input(_)));
}

#[test]
fn fine_tune_swaps_head_arity_and_counts() {
    let (mut graph, mut store) = build_coronet(&mini_config(4), 3).unwrap();
    let (before, _) = count_parameters(&graph).unwrap();

    fine_tune(&mut graph, &mut store, 3, &quick_train_config(3, 1)).unwrap();
    let (after3, _) = count_parameters(&graph).unwrap();
    assert_eq!(
        before.total as i64 - after3.total as i64,
        (256 * 4 + 4) - (256 * 3 + 3),
    );
    let head = graph.node_id("dense_1").unwrap();
    let weight = store.get(head, "weight").unwrap();
    assert_eq!(weight.dims(), &[256, 3]);
    let params: usize = graph.nodes()[head].spec.param_count().0;
    assert_eq!(params, 256 * 3 + 3); // 771

    fine_tune(&mut graph, &mut store, 2, &quick_train_config(3, 1)).unwrap();
    let head = graph.node_id("dense_1").unwrap();
    assert_eq!(graph.nodes()[head].spec.param_count().0, 256 * 2 + 2); // 514
}

#[test]
fn fine_tune_below_two_classes_is_input_error() {
    let (mut graph, mut store) = build_coronet(&mini_config(4), 3).unwrap();
    let err = fine_tune(&mut graph, &mut store, 1, &quick_train_config(3, 1)).unwrap_err();
    assert!(matches!(err, coronet::error::Error::Input(_)));
}

#[test]
fn frozen_backbone_gets_exactly_zero_gradients() {
    let (mut graph, mut store) = build_coronet(&mini_config(4), 9).unwrap();
    let config = TrainConfig {
        freeze_backbone: true,
        ..quick_train_config(9, 1)
    };
    fine_tune(&mut graph, &mut store, 3, &config).unwrap();

    let (images, labels) = synthetic_class_images(2, 3, 16, 16, 5);
    let trace = forward(&graph, &store, &images, Mode::Train { dropout_seed: 1 }).unwrap();
    let grad = cross_entropy_grad(trace.output(), &labels).unwrap();
    let grads = backward(&graph, &store, &images, &trace, grad).unwrap();

    let boundary = graph.node_id("flatten").unwrap();
    for id in 0..boundary {
        for g in &grads.by_node[id] {
            assert!(g.is_none(), "backbone node {id} received a gradient");
        }
    }
    // the head still learns
    let head = graph.node_id("dense_1").unwrap();
    assert!(grads.by_node[head][0].is_some());

    // trainable count collapses to the two head dense layers
    let (count, _) = count_parameters(&graph).unwrap();
    let dense = graph.node_id("dense").unwrap();
    let expected = graph.nodes()[dense].spec.param_count().0
        + graph.nodes()[head].spec.param_count().0;
    assert_eq!(count.trainable, expected);
}

#[test]
fn backbone_only_weights_leave_head_at_init() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("backbone.bin");
    let (graph4, store4) = build_coronet(&mini_config(4), 21).unwrap();
    let boundary = graph4.node_id("flatten").unwrap();
    let backbone_names: Vec<String> = graph4.nodes()[..boundary]
        .iter()
        .map(|n| n.name.clone())
        .collect();
    save_weights_subset(&graph4, &store4, &path, |name| {
        backbone_names.iter().any(|n| n == name)
    })
    .unwrap();

    let (graph3, mut store3) = build_coronet(&mini_config(3), 99).unwrap();
    let init_head = store3
        .get(graph3.node_id("dense_1").unwrap(), "weight")
        .unwrap()
        .clone();
    let loaded = load_weights(&graph3, &mut store3, &path).unwrap();
    assert!(loaded > 0);

    // backbone now mirrors the 4-class source
    for name in &backbone_names {
        let id4 = graph4.node_id(name).unwrap();
        let id3 = graph3.node_id(name).unwrap();
        assert_eq!(store4.node_params(id4), store3.node_params(id3), "{name}");
    }
    // the head kept its fresh initialization
    let head_after = store3
        .get(graph3.node_id("dense_1").unwrap(), "weight")
        .unwrap();
    assert_eq!(head_after, &init_head);
}

#[test]
fn validation_split_is_callers_choice() {
    let (graph, mut store) = build_coronet(&mini_config(4), 2).unwrap();
    let (images, labels) = synthetic_class_images(2, 4, 16, 16, 5);
    let history = fit(
        &graph,
        &mut store,
        &images,
        &labels,
        None,
        &quick_train_config(2, 2),
    )
    .unwrap();
    assert!(history.iter().all(|r| r.val_loss.is_none() && r.val_acc.is_none()));

    let (graph, mut store) = build_coronet(&mini_config(4), 2).unwrap();
    let history = fit(
        &graph,
        &mut store,
        &images,
        &labels,
        Some((&images, &labels)),
        &quick_train_config(2, 2),
    )
    .unwrap();
    assert!(history.iter().all(|r| r.val_loss.is_some() && r.val_acc.is_some()));
}
