//! Transfer-learning workflow: train a 4-class mini model, export its
//! backbone, rebuild for 3 classes with the pretrained backbone frozen, and
//! fine-tune only the head.
//!
//! Run with: `cargo run --release --example finetune_head`

use coronet::model::{
    build_coronet, count_parameters, load_weights, save_weights_subset, ArchitectureConfig,
    Variant,
};
use coronet::rng;
use coronet::tensor::Tensor;
use coronet::train::{fine_tune, fit, TrainConfig};

fn quadrant_images(per_class: usize, classes: usize, size: usize, seed: u64) -> (Tensor, Vec<usize>) {
    let n = per_class * classes;
    let mut data = vec![0.0f32; n * size * size * 3];
    let mut labels = Vec::with_capacity(n);
    let mut rng = rng::rng_from_seed(seed);
    for i in 0..n {
        let class = i % classes;
        labels.push(class);
        let (qy, qx) = (class / 2, class % 2);
        for y in 0..size {
            for x in 0..size {
                let inside = (y < size / 2) == (qy == 0) && (x < size / 2) == (qx == 0);
                let base = if inside { 0.9 } else { 0.2 };
                let noise = (rng::uniform_unit(&mut rng) as f32 - 0.5) * 0.1;
                let at = ((i * size + y) * size + x) * 3;
                let v = (base + noise).clamp(0.0, 1.0);
                data[at] = v;
                data[at + 1] = v;
                data[at + 2] = v;
            }
        }
    }
    (Tensor::from_values([n, size, size, 3], data).unwrap(), labels)
}

fn main() -> coronet::Result<()> {
    let config = ArchitectureConfig::new(Variant::Mini, 4).with_input(16, 16);
    let base_train = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 8,
        epochs: 10,
        shuffle_each_epoch: true,
        rng_seed: 3,
        freeze_backbone: false,
    };

    // source task: 4 classes
    let (graph, mut store) = build_coronet(&config, 3)?;
    let (images4, labels4) = quadrant_images(6, 4, 16, 3);
    let hist = fit(&graph, &mut store, &images4, &labels4, None, &base_train)?;
    println!(
        "source model: final accuracy {:.1}%",
        hist.last().unwrap().train_acc * 100.0
    );

    // export the backbone only
    let dir = tempfile::tempdir()?;
    let backbone_path = dir.path().join("backbone.weights");
    let boundary = graph.node_id("flatten").unwrap();
    let keep: Vec<String> = graph.nodes()[..boundary]
        .iter()
        .map(|n| n.name.clone())
        .collect();
    save_weights_subset(&graph, &store, &backbone_path, |name| {
        keep.iter().any(|k| k == name)
    })?;

    // target task: 3 classes, frozen backbone
    let (mut graph3, mut store3) = build_coronet(&config, 88)?;
    load_weights(&graph3, &mut store3, &backbone_path)?;
    let finetune_config = TrainConfig {
        freeze_backbone: true,
        rng_seed: 88,
        ..base_train.clone()
    };
    fine_tune(&mut graph3, &mut store3, 3, &finetune_config)?;
    let (count, _) = count_parameters(&graph3)?;
    println!(
        "after freezing: {} of {} parameters trainable",
        count.trainable, count.total
    );

    let (images3, labels3) = quadrant_images(6, 3, 16, 9);
    let hist = fit(&graph3, &mut store3, &images3, &labels3, None, &finetune_config)?;
    println!(
        "fine-tuned head: final accuracy {:.1}%",
        hist.last().unwrap().train_acc * 100.0
    );
    Ok(())
}
