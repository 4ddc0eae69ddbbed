//! Train the mini variant on synthetic quadrant-pattern images, print the
//! history, and round-trip the learned weights through the file format.
//!
//! Run with: `cargo run --release --example train_mini`

use coronet::model::{build_coronet, load_weights, predict, save_weights, ArchitectureConfig, Variant};
use coronet::rng;
use coronet::tensor::Tensor;
use coronet::train::{fit, TrainConfig};

/// Four classes, one bright quadrant each, light noise.
fn synthetic_images(per_class: usize, size: usize, seed: u64) -> (Tensor, Vec<usize>) {
    let n = per_class * 4;
    let mut data = vec![0.0f32; n * size * size * 3];
    let mut labels = Vec::with_capacity(n);
    let mut rng = rng::rng_from_seed(seed);
    for i in 0..n {
        let class = i % 4;
        labels.push(class);
        let (qy, qx) = (class / 2, class % 2);
        for y in 0..size {
            for x in 0..size {
                let inside = (y < size / 2) == (qy == 0) && (x < size / 2) == (qx == 0);
                let base = if inside { 0.9 } else { 0.2 };
                let noise = (rng::uniform_unit(&mut rng) as f32 - 0.5) * 0.1;
                let v = (base + noise).clamp(0.0, 1.0);
                let at = ((i * size + y) * size + x) * 3;
                data[at] = v;
                data[at + 1] = v;
                data[at + 2] = v;
            }
        }
    }
    (Tensor::from_values([n, size, size, 3], data).unwrap(), labels)
}

fn main() -> coronet::Result<()> {
    let config = ArchitectureConfig::new(Variant::Mini, 4).with_input(32, 32);
    let (graph, mut store) = build_coronet(&config, 7)?;
    let (images, labels) = synthetic_images(10, 32, 7);

    // enough steps for the batch-norm moving statistics to settle, so the
    // reloaded model also predicts well in inference mode
    let train_config = TrainConfig {
        learning_rate: 5e-4,
        batch_size: 10,
        epochs: 100,
        shuffle_each_epoch: true,
        rng_seed: 7,
        freeze_backbone: false,
    };
    let history = fit(&graph, &mut store, &images, &labels, None, &train_config)?;
    for row in history.iter().step_by(20) {
        println!(
            "epoch {:>3}: loss {:.4}, accuracy {:.1}%",
            row.epoch,
            row.train_loss,
            row.train_acc * 100.0
        );
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("mini.weights");
    save_weights(&graph, &store, &path)?;
    let (_, mut reloaded) = build_coronet(&config, 999)?;
    load_weights(&graph, &mut reloaded, &path)?;

    let (probs, predicted) = predict(&graph, &reloaded, &images)?;
    let correct = predicted
        .iter()
        .zip(&labels)
        .filter(|(p, l)| p == l)
        .count();
    println!(
        "reloaded model: {}/{} correct, first row {:?}",
        correct,
        labels.len(),
        &probs.data()[..4]
    );
    Ok(())
}
