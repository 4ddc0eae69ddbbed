//! Produce a training history and export it as per-epoch plot tables plus a
//! static SVG chart of the accuracy and loss trajectories.
//!
//! Run with: `cargo run --release --example export_curves`

use coronet::history::{curve_tables, render_curves_svg, render_history_csv};
use coronet::model::{build_coronet, ArchitectureConfig, Variant};
use coronet::rng;
use coronet::tensor::Tensor;
use coronet::train::{fit, TrainConfig};

fn main() -> coronet::Result<()> {
    let config = ArchitectureConfig::new(Variant::Mini, 4).with_input(16, 16);
    let (graph, mut store) = build_coronet(&config, 31)?;

    // random-class noise images: losses fall slowly, good for a visible curve
    let n = 24;
    let mut rng = rng::rng_from_seed(2);
    let data: Vec<f32> = (0..n * 16 * 16 * 3)
        .map(|_| rng::uniform_unit(&mut rng) as f32)
        .collect();
    let images = Tensor::from_values([n, 16, 16, 3], data)?;
    let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
    let (train_images, val_images) = (&images, &images);

    let train_config = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 8,
        epochs: 15,
        shuffle_each_epoch: true,
        rng_seed: 31,
        freeze_backbone: false,
    };
    let history = fit(
        &graph,
        &mut store,
        train_images,
        &labels,
        Some((val_images, &labels)),
        &train_config,
    )?;

    let out = std::env::temp_dir().join("coronet_curves");
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("history.csv"), render_history_csv(&history))?;
    let (acc, loss) = curve_tables(&history);
    std::fs::write(out.join("accuracy_curve.csv"), acc)?;
    std::fs::write(out.join("loss_curve.csv"), loss)?;
    std::fs::write(out.join("curves.svg"), render_curves_svg(&history)?)?;
    println!("wrote history.csv, accuracy_curve.csv, loss_curve.csv, curves.svg");
    println!("to {}", out.display());
    Ok(())
}
