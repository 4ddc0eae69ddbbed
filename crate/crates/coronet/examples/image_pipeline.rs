//! The data pipeline end to end: write PGM fixtures, load the manifest,
//! rebalance by random under-sampling, merge labels for the 3-class task and
//! split into stratified folds.
//!
//! Run with: `cargo run --example image_pipeline`

use coronet::data::{
    kfold_split, load_images, load_manifest, merge_labels, pgm, undersample, ClassLabel,
    LabelScheme, UndersampleTargets,
};
use coronet::rng;

fn main() -> coronet::Result<()> {
    let dir = tempfile::tempdir()?;
    let mut manifest_text = String::from("path,label\n");
    let mut rng = rng::rng_from_seed(42);

    // imbalanced source: 12 / 8 / 10 / 6 images across the four classes
    let classes = [
        (ClassLabel::Normal, 12usize),
        (ClassLabel::PneumoniaBacterial, 8),
        (ClassLabel::PneumoniaViral, 10),
        (ClassLabel::Covid19, 6),
    ];
    for (label, count) in classes {
        for i in 0..count {
            let gray: Vec<u8> = (0..64)
                .map(|_| (rng::uniform_index(&mut rng, 256)) as u8)
                .collect();
            let name = format!("{}_{i}.pgm", label.as_str().to_lowercase());
            std::fs::write(dir.path().join(&name), pgm::encode_pgm(&gray, 8, 8)?)?;
            manifest_text.push_str(&format!("{name},{label}\n"));
        }
    }
    let manifest_path = dir.path().join("manifest.csv");
    std::fs::write(&manifest_path, manifest_text)?;

    let manifest = load_manifest(&manifest_path)?;
    println!("source counts: {:?}", manifest.class_counts());

    let balanced = undersample(&manifest, &UndersampleTargets::Min, 1)?;
    println!("balanced counts: {:?}", balanced.class_counts());

    let merged = merge_labels(&balanced, LabelScheme::Three);
    println!("3-class counts: {:?}", merged.class_counts());

    let folds = kfold_split(&merged, 3, 1)?;
    for (i, fold) in folds.iter().enumerate() {
        println!("fold {}: {} records {:?}", i + 1, fold.len(), fold.class_counts());
    }

    let loaded = load_images(&folds[0], LabelScheme::Three, 16, 16, dir.path())?;
    println!(
        "fold 1 decoded: images {:?}, labels {:?}",
        loaded.images.dims(),
        loaded.labels
    );
    Ok(())
}
