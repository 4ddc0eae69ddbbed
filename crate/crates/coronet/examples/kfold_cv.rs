//! Stratified 4-fold cross-validation through the library API: a fresh mini
//! model per fold, confusion matrix on each held-out fold, and the averaged
//! summary row.
//!
//! Run with: `cargo run --release --example kfold_cv`

use coronet::data::{kfold_split, load_images, parse_manifest, pgm, ClassLabel, DatasetManifest, LabelScheme};
use coronet::metrics::{fold_average, ConfusionMatrix};
use coronet::model::{build_coronet, predict, ArchitectureConfig, Variant};
use coronet::rng;
use coronet::train::{fit, TrainConfig};
use std::path::Path;

fn write_dataset(dir: &Path, per_class: usize, size: usize) -> coronet::Result<DatasetManifest> {
    let mut manifest = String::from("path,label\n");
    let mut rng = rng::rng_from_seed(5);
    let classes = [
        ClassLabel::Covid19,
        ClassLabel::Normal,
        ClassLabel::PneumoniaBacterial,
        ClassLabel::PneumoniaViral,
    ];
    for (k, label) in classes.iter().enumerate() {
        let (qy, qx) = (k / 2, k % 2);
        for i in 0..per_class {
            let mut gray = vec![0u8; size * size];
            for y in 0..size {
                for x in 0..size {
                    let inside = (y < size / 2) == (qy == 0) && (x < size / 2) == (qx == 0);
                    let base: i32 = if inside { 230 } else { 50 };
                    let noise = rng::uniform_index(&mut rng, 21) as i32 - 10;
                    gray[y * size + x] = (base + noise).clamp(0, 255) as u8;
                }
            }
            let name = format!("{}_{i}.pgm", label.as_str().replace('-', "").to_lowercase());
            std::fs::write(dir.join(&name), pgm::encode_pgm(&gray, size, size)?)?;
            manifest.push_str(&format!("{name},{label}\n"));
        }
    }
    parse_manifest(&manifest)
}

fn main() -> coronet::Result<()> {
    let dir = tempfile::tempdir()?;
    let scheme = LabelScheme::Four;
    let manifest = write_dataset(dir.path(), 6, 16)?;
    let folds = kfold_split(&manifest, 4, 11)?;

    let config = ArchitectureConfig::new(Variant::Mini, 4).with_input(16, 16);
    let train_config = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 6,
        epochs: 150,
        shuffle_each_epoch: true,
        rng_seed: 11,
        freeze_backbone: false,
    };

    let mut reports = Vec::new();
    for held_out in 0..folds.len() {
        let mut train_manifest = DatasetManifest::default();
        for (i, fold) in folds.iter().enumerate() {
            if i != held_out {
                train_manifest.records.extend(fold.records.iter().cloned());
            }
        }
        let train_set = load_images(&train_manifest, scheme, 16, 16, dir.path())?;
        let val_set = load_images(&folds[held_out], scheme, 16, 16, dir.path())?;

        let (graph, mut store) = build_coronet(&config, 11)?;
        fit(
            &graph,
            &mut store,
            &train_set.images,
            &train_set.labels,
            Some((&val_set.images, &val_set.labels)),
            &train_config,
        )?;
        let (_, predicted) = predict(&graph, &store, &val_set.images)?;
        let cm = ConfusionMatrix::from_predictions(scheme.class_names(), &val_set.labels, &predicted)?;
        let report = cm.report()?;
        println!(
            "fold {}: accuracy {:.1}%",
            held_out + 1,
            report.accuracy * 100.0
        );
        reports.push(report);
    }

    let summary = fold_average(&reports)?;
    println!();
    println!("{summary}");
    Ok(())
}
