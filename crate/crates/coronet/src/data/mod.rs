//! Dataset plumbing: manifest ingestion, label schemes, random
//! under-sampling, stratified k-fold splitting and image loading.

pub mod pgm;
pub mod resize;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;
use std::collections::HashSet;
use std::fmt;
use std::path::Path;

/// Closed label alphabet across all three classification schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    Covid19,
    Normal,
    PneumoniaBacterial,
    PneumoniaViral,
    /// Merged bacterial + viral class of the 3-class scheme.
    Pneumonia,
    /// Everything but COVID-19 in the binary scheme.
    NonCovid,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 6] = [
        ClassLabel::Covid19,
        ClassLabel::Normal,
        ClassLabel::PneumoniaBacterial,
        ClassLabel::PneumoniaViral,
        ClassLabel::Pneumonia,
        ClassLabel::NonCovid,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::Covid19 => "COVID-19",
            ClassLabel::Normal => "Normal",
            ClassLabel::PneumoniaBacterial => "PneumoniaBacterial",
            ClassLabel::PneumoniaViral => "PneumoniaViral",
            ClassLabel::Pneumonia => "Pneumonia",
            ClassLabel::NonCovid => "NonCOVID",
        }
    }

    pub fn parse(s: &str) -> Option<ClassLabel> {
        Self::ALL.iter().copied().find(|l| l.as_str() == s)
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classification task arity. Merging is total and deterministic; COVID-19 is
/// preserved by every scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelScheme {
    Four,
    Three,
    Two,
}

impl LabelScheme {
    pub fn classes(&self) -> Vec<ClassLabel> {
        match self {
            LabelScheme::Four => vec![
                ClassLabel::Covid19,
                ClassLabel::Normal,
                ClassLabel::PneumoniaBacterial,
                ClassLabel::PneumoniaViral,
            ],
            LabelScheme::Three => vec![
                ClassLabel::Covid19,
                ClassLabel::Normal,
                ClassLabel::Pneumonia,
            ],
            LabelScheme::Two => vec![ClassLabel::Covid19, ClassLabel::NonCovid],
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes().iter().map(|c| c.to_string()).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.classes().len()
    }

    pub fn merge(&self, label: ClassLabel) -> ClassLabel {
        match self {
            LabelScheme::Four => label,
            LabelScheme::Three => match label {
                ClassLabel::PneumoniaBacterial | ClassLabel::PneumoniaViral => {
                    ClassLabel::Pneumonia
                }
                other => other,
            },
            LabelScheme::Two => match label {
                ClassLabel::Covid19 => ClassLabel::Covid19,
                _ => ClassLabel::NonCovid,
            },
        }
    }

    /// Index of a label within this scheme's class list.
    pub fn label_index(&self, label: ClassLabel) -> Option<usize> {
        self.classes().iter().position(|&c| c == label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub path: String,
    pub label: ClassLabel,
}

/// Labeled image records in file order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-class counts in canonical label order, present classes only.
    pub fn class_counts(&self) -> Vec<(ClassLabel, usize)> {
        ClassLabel::ALL
            .iter()
            .filter_map(|&label| {
                let n = self.records.iter().filter(|r| r.label == label).count();
                (n > 0).then_some((label, n))
            })
            .collect()
    }

    pub fn count_of(&self, label: ClassLabel) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }
}

/// Parse a `path,label` CSV (header required). Reports the 1-based line
/// number of the first malformed row, unknown label or duplicate path.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "path,label" => {}
        Some((_, header)) => {
            return Err(Error::parse(
                1,
                format!("expected header 'path,label', got '{}'", header.trim()),
            ))
        }
        None => return Err(Error::parse(1, "empty manifest".to_string())),
    }
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (path, label) = match (fields.next(), fields.next(), fields.next()) {
            (Some(p), Some(l), None) => (p.trim(), l.trim()),
            _ => {
                return Err(Error::parse(
                    line_no,
                    "expected exactly two fields 'path,label'".to_string(),
                ))
            }
        };
        if path.is_empty() {
            return Err(Error::parse(line_no, "empty path".to_string()));
        }
        let label = ClassLabel::parse(label)
            .ok_or_else(|| Error::parse(line_no, format!("unknown label '{label}'")))?;
        if !seen.insert(path.to_string()) {
            return Err(Error::parse(line_no, format!("duplicate path '{path}'")));
        }
        records.push(ManifestRecord {
            path: path.to_string(),
            label,
        });
    }
    Ok(DatasetManifest { records })
}

/// Serialize back to the `path,label` CSV form.
pub fn render_manifest(manifest: &DatasetManifest) -> String {
    let mut out = String::from("path,label\n");
    for r in &manifest.records {
        out.push_str(&r.path);
        out.push(',');
        out.push_str(r.label.as_str());
        out.push('\n');
    }
    out
}

/// Per-class target sizes for `undersample`.
#[derive(Debug, Clone)]
pub enum UndersampleTargets {
    /// Bring every class down to the smallest class count.
    Min,
    /// Explicit per-class targets; classes not listed keep all records.
    Counts(Vec<(ClassLabel, usize)>),
}

/// Keep a seeded uniformly random subset of each class, preserving manifest
/// order among the kept records.
pub fn undersample(
    manifest: &DatasetManifest,
    targets: &UndersampleTargets,
    seed: u64,
) -> Result<DatasetManifest> {
    let counts = manifest.class_counts();
    let resolved: Vec<(ClassLabel, usize)> = match targets {
        UndersampleTargets::Min => {
            let min = counts.iter().map(|&(_, n)| n).min().unwrap_or(0);
            counts.iter().map(|&(label, _)| (label, min)).collect()
        }
        UndersampleTargets::Counts(list) => list.clone(),
    };
    let mut keep = vec![true; manifest.len()];
    for (label, target) in resolved {
        let class_indices: Vec<usize> = manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(i, _)| i)
            .collect();
        if target > class_indices.len() {
            return Err(Error::input(format!(
                "undersample target {} exceeds {} available records for {}",
                target,
                class_indices.len(),
                label
            )));
        }
        let class_id = ClassLabel::ALL.iter().position(|&l| l == label).unwrap();
        let mut shuffled = class_indices.clone();
        let mut rng = rng::rng_from_seed(rng::derive_seed(seed, 0x756e_6465, class_id as u64, 0));
        rng::shuffle(&mut shuffled, &mut rng);
        for &drop in &shuffled[target..] {
            keep[drop] = false;
        }
    }
    Ok(DatasetManifest {
        records: manifest
            .records
            .iter()
            .enumerate()
            .filter(|(i, _)| keep[*i])
            .map(|(_, r)| r.clone())
            .collect(),
    })
}

/// Rewrite every record's label under the given scheme.
pub fn merge_labels(manifest: &DatasetManifest, scheme: LabelScheme) -> DatasetManifest {
    DatasetManifest {
        records: manifest
            .records
            .iter()
            .map(|r| ManifestRecord {
                path: r.path.clone(),
                label: scheme.merge(r.label),
            })
            .collect(),
    }
}

/// Stratified k-fold split: within each class a seeded shuffle, then records
/// are dealt round-robin with a cursor that continues across classes, so fold
/// sizes differ by at most 1 both per class and overall. The folds partition
/// the manifest exactly. A class with fewer than k records lands in only some
/// folds; cross-validation drivers that need every class in every fold must
/// check counts up front.
pub fn kfold_split(
    manifest: &DatasetManifest,
    k: usize,
    seed: u64,
) -> Result<Vec<DatasetManifest>> {
    if k < 2 {
        return Err(Error::input(format!("k-fold needs k >= 2, got {k}")));
    }
    let counts = manifest.class_counts();
    if counts.is_empty() {
        return Err(Error::input("cannot split an empty manifest".to_string()));
    }
    let mut fold_indices: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut cursor = 0usize;
    for &(label, _) in &counts {
        let mut class_indices: Vec<usize> = manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(i, _)| i)
            .collect();
        let class_id = ClassLabel::ALL.iter().position(|&l| l == label).unwrap();
        let mut rng = rng::rng_from_seed(rng::derive_seed(seed, 0x666f_6c64, class_id as u64, 0));
        rng::shuffle(&mut class_indices, &mut rng);
        for idx in class_indices {
            fold_indices[cursor % k].push(idx);
            cursor += 1;
        }
    }
    Ok(fold_indices
        .into_iter()
        .map(|mut idx| {
            idx.sort_unstable();
            DatasetManifest {
                records: idx.into_iter().map(|i| manifest.records[i].clone()).collect(),
            }
        })
        .collect())
}

/// One decoded, resized record: `[H, W, 3]` pixels in [0, 1] (8-bit source)
/// and its label.
#[derive(Debug, Clone)]
pub struct ImageSample {
    pub pixels: Tensor,
    pub label: ClassLabel,
}

/// Decode a single manifest record (binary PGM/PPM) and resize it. Relative
/// paths resolve against `base_dir`.
pub fn load_sample(
    record: &ManifestRecord,
    target_h: usize,
    target_w: usize,
    base_dir: &Path,
) -> Result<ImageSample> {
    let path = {
        let p = Path::new(&record.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    };
    let bytes = std::fs::read(&path)
        .map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    let pixels = pgm::decode_image(&bytes)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    let pixels = resize::resize_bilinear(&pixels, target_h, target_w)?;
    Ok(ImageSample {
        pixels,
        label: record.label,
    })
}

/// Images stacked into one `[N, H, W, C]` tensor plus scheme label indices.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

/// Load every manifest record via [`load_sample`] and stack the batch.
pub fn load_images(
    manifest: &DatasetManifest,
    scheme: LabelScheme,
    target_h: usize,
    target_w: usize,
    base_dir: &Path,
) -> Result<LoadedDataset> {
    if manifest.is_empty() {
        return Err(Error::input("empty manifest".to_string()));
    }
    let mut data = Vec::with_capacity(manifest.len() * target_h * target_w * 3);
    let mut labels = Vec::with_capacity(manifest.len());
    for record in &manifest.records {
        let sample = load_sample(record, target_h, target_w, base_dir)?;
        data.extend_from_slice(sample.pixels.data());
        let merged = scheme.merge(sample.label);
        let index = scheme.label_index(merged).ok_or_else(|| {
            Error::input(format!("label {merged} outside scheme classes"))
        })?;
        labels.push(index);
    }
    let images = Tensor::from_values(vec![manifest.len(), target_h, target_w, 3], data)?;
    Ok(LoadedDataset { images, labels })
}
