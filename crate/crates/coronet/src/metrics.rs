//! Confusion matrices and the derived classification metrics: per-class
//! precision, recall, specificity and F-measure, macro averages, overall
//! accuracy, and cross-validation fold summaries.
//!
//! Convention: rows are the actual class, columns the predicted class.
//! Averages across classes are macro (unweighted). A metric whose denominator
//! is zero is reported as 0 and flagged in the report rather than dividing.

use crate::error::{Error, Result};
use serde::Serialize;
use std::fmt;
use std::path::Path;

/// Square actual-by-predicted count matrix over an ordered class list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = classes.len();
        if k == 0 {
            return Err(Error::input("confusion matrix needs at least one class".to_string()));
        }
        if counts.len() != k || counts.iter().any(|row| row.len() != k) {
            return Err(Error::input(format!(
                "counts must form a {k}x{k} matrix"
            )));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    /// Tally actual/predicted label-index pairs. Indices must address the
    /// class list.
    pub fn from_predictions(
        classes: Vec<String>,
        actual: &[usize],
        predicted: &[usize],
    ) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(Error::input(format!(
                "{} actual labels vs {} predictions",
                actual.len(),
                predicted.len()
            )));
        }
        let k = classes.len();
        let mut counts = vec![vec![0u64; k]; k];
        for (&a, &p) in actual.iter().zip(predicted) {
            if a >= k || p >= k {
                return Err(Error::input(format!(
                    "label index {} outside the {k}-class list",
                    a.max(p)
                )));
            }
            counts[a][p] += 1;
        }
        ConfusionMatrix::new(classes, counts)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// (TP, FP, FN, TN) for one class; the four always sum to the total.
    pub fn class_counts(&self, class: usize) -> (u64, u64, u64, u64) {
        let k = self.classes.len();
        let tp = self.counts[class][class];
        let fp: u64 = (0..k)
            .filter(|&r| r != class)
            .map(|r| self.counts[r][class])
            .sum();
        let fn_: u64 = (0..k)
            .filter(|&c| c != class)
            .map(|c| self.counts[class][c])
            .sum();
        let tn = self.total() - tp - fp - fn_;
        (tp, fp, fn_, tn)
    }

    /// Correctly classified fraction: trace / total.
    pub fn overall_accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::input("empty confusion matrix".to_string()));
        }
        Ok(self.trace() as f64 / total as f64)
    }

    /// Precision, recall, specificity and F-measure for one class.
    pub fn class_metrics(&self, class: usize) -> Result<ClassMetrics> {
        if class >= self.classes.len() {
            return Err(Error::input(format!(
                "class index {class} outside the {}-class list",
                self.classes.len()
            )));
        }
        let (tp, fp, fn_, tn) = self.class_counts(class);
        let mut undefined = Vec::new();
        let mut ratio = |num: u64, den: u64, name: &str| -> f64 {
            if den == 0 {
                undefined.push(name.to_string());
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp, "precision");
        let recall = ratio(tp, tp + fn_, "recall");
        let specificity = ratio(tn, tn + fp, "specificity");
        let f_measure = if precision + recall == 0.0 {
            if !undefined.contains(&"f_measure".to_string()) {
                undefined.push("f_measure".to_string());
            }
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Ok(ClassMetrics {
            class: self.classes[class].clone(),
            precision,
            recall,
            specificity,
            f_measure,
            undefined,
        })
    }

    /// Full per-class + macro + accuracy report.
    pub fn report(&self) -> Result<MetricsReport> {
        let per_class: Vec<ClassMetrics> = (0..self.classes.len())
            .map(|c| self.class_metrics(c))
            .collect::<Result<_>>()?;
        let macro_avg = macro_average(&per_class)?;
        Ok(MetricsReport {
            classes: self.classes.clone(),
            per_class,
            macro_avg,
            accuracy: self.overall_accuracy()?,
        })
    }

    /// Render as CSV: `actual\predicted,<classes...>` header, one row per
    /// actual class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("actual\\predicted");
        for c in &self.classes {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&self.classes[i]);
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Per-class metric fractions in [0, 1]. `undefined` lists metrics whose
/// denominator was zero (reported as 0).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f_measure: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

/// Unweighted means across classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f_measure: f64,
}

/// Unweighted mean of each metric across the given classes.
pub fn macro_average(per_class: &[ClassMetrics]) -> Result<MacroMetrics> {
    if per_class.is_empty() {
        return Err(Error::input("macro average over zero classes".to_string()));
    }
    let k = per_class.len() as f64;
    Ok(MacroMetrics {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        specificity: per_class.iter().map(|m| m.specificity).sum::<f64>() / k,
        f_measure: per_class.iter().map(|m| m.f_measure).sum::<f64>() / k,
    })
}

/// Metrics of one evaluation: per-class rows, their macro average and the
/// overall accuracy. Values are fractions; rendering formats them as
/// percentages (1 decimal, accuracy at 2).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub classes: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    pub accuracy: f64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |v: f64| format!("{:.1}", v * 100.0);
        writeln!(
            f,
            "{:<22} {:>10} {:>8} {:>12} {:>10}",
            "Class", "Precision", "Recall", "Specificity", "F-measure"
        )?;
        for m in &self.per_class {
            let flag = if m.undefined.is_empty() { "" } else { " *" };
            writeln!(
                f,
                "{:<22} {:>10} {:>8} {:>12} {:>10}{}",
                m.class,
                pct(m.precision),
                pct(m.recall),
                pct(m.specificity),
                pct(m.f_measure),
                flag
            )?;
        }
        writeln!(
            f,
            "{:<22} {:>10} {:>8} {:>12} {:>10}",
            "Average",
            pct(self.macro_avg.precision),
            pct(self.macro_avg.recall),
            pct(self.macro_avg.specificity),
            pct(self.macro_avg.f_measure)
        )?;
        writeln!(f, "Overall Accuracy: {:.2}%", self.accuracy * 100.0)?;
        for m in &self.per_class {
            if !m.undefined.is_empty() {
                writeln!(
                    f,
                    "* {}: zero denominator for {}",
                    m.class,
                    m.undefined.join(", ")
                )?;
            }
        }
        Ok(())
    }
}

/// One cross-validation row: the aggregate metrics of a single fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldRow {
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f_measure: f64,
    pub accuracy: f64,
}

/// Per-fold aggregate rows plus their arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValReport {
    pub folds: Vec<FoldRow>,
    pub mean: FoldRow,
}

/// Average the aggregate metrics of per-fold reports. All folds must share
/// one class set.
pub fn fold_average(reports: &[MetricsReport]) -> Result<CrossValReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::input("fold average over zero folds".to_string()))?;
    for r in reports {
        if r.classes != first.classes {
            return Err(Error::input(format!(
                "fold class sets differ: {:?} vs {:?}",
                first.classes, r.classes
            )));
        }
    }
    let folds: Vec<FoldRow> = reports
        .iter()
        .map(|r| FoldRow {
            precision: r.macro_avg.precision,
            recall: r.macro_avg.recall,
            specificity: r.macro_avg.specificity,
            f_measure: r.macro_avg.f_measure,
            accuracy: r.accuracy,
        })
        .collect();
    let k = folds.len() as f64;
    let mean = FoldRow {
        precision: folds.iter().map(|f| f.precision).sum::<f64>() / k,
        recall: folds.iter().map(|f| f.recall).sum::<f64>() / k,
        specificity: folds.iter().map(|f| f.specificity).sum::<f64>() / k,
        f_measure: folds.iter().map(|f| f.f_measure).sum::<f64>() / k,
        accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / k,
    };
    Ok(CrossValReport { folds, mean })
}

impl fmt::Display for CrossValReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |v: f64| format!("{:.1}", v * 100.0);
        writeln!(
            f,
            "{:<8} {:>10} {:>8} {:>12} {:>10} {:>9}",
            "Fold", "Precision", "Recall", "Specificity", "F-measure", "Accuracy"
        )?;
        for (i, row) in self.folds.iter().enumerate() {
            writeln!(
                f,
                "{:<8} {:>10} {:>8} {:>12} {:>10} {:>9}",
                i + 1,
                pct(row.precision),
                pct(row.recall),
                pct(row.specificity),
                pct(row.f_measure),
                format!("{:.2}", row.accuracy * 100.0)
            )?;
        }
        writeln!(
            f,
            "{:<8} {:>10} {:>8} {:>12} {:>10} {:>9}",
            "Average",
            pct(self.mean.precision),
            pct(self.mean.recall),
            pct(self.mean.specificity),
            pct(self.mean.f_measure),
            format!("{:.2}", self.mean.accuracy * 100.0)
        )
    }
}

/// Parse the CSV form written by [`ConfusionMatrix::to_csv`]: a header row
/// with class names, then one integer row per actual class. Errors carry the
/// offending line (and cell) position.
pub fn parse_cm_csv_str(text: &str) -> Result<ConfusionMatrix> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty confusion matrix file".to_string()))?;
    let mut fields = header.split(',');
    let corner = fields.next().unwrap_or_default().trim();
    if corner != "actual\\predicted" {
        return Err(Error::parse(
            1,
            format!("expected 'actual\\predicted' in the header corner, got '{corner}'"),
        ));
    }
    let classes: Vec<String> = fields.map(|f| f.trim().to_string()).collect();
    if classes.is_empty() || classes.iter().any(|c| c.is_empty()) {
        return Err(Error::parse(1, "header lists no class names".to_string()));
    }
    let k = classes.len();
    let mut counts: Vec<Vec<u64>> = Vec::with_capacity(k);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let row_index = counts.len();
        if row_index == k {
            return Err(Error::parse(
                line_no,
                format!("more than {k} rows for a {k}-class matrix"),
            ));
        }
        let mut fields = line.split(',');
        let row_label = fields.next().unwrap_or_default().trim();
        if row_label != classes[row_index] {
            return Err(Error::parse(
                line_no,
                format!(
                    "row label '{row_label}' does not match class '{}' of the header",
                    classes[row_index]
                ),
            ));
        }
        let mut row = Vec::with_capacity(k);
        for (col, cell) in fields.enumerate() {
            if col >= k {
                return Err(Error::parse(
                    line_no,
                    format!("row has more than {k} cells"),
                ));
            }
            let value = cell.trim().parse::<u64>().map_err(|_| {
                Error::parse(
                    line_no,
                    format!(
                        "cell ({}, {}) is '{}', expected a non-negative integer",
                        classes[row_index], classes[col], cell.trim()
                    ),
                )
            })?;
            row.push(value);
        }
        if row.len() != k {
            return Err(Error::parse(
                line_no,
                format!("row has {} cells, expected {k}", row.len()),
            ));
        }
        counts.push(row);
    }
    if counts.len() != k {
        return Err(Error::parse(
            counts.len() + 1,
            format!("matrix has {} rows, expected {k}", counts.len()),
        ));
    }
    ConfusionMatrix::new(classes, counts)
}

pub fn parse_cm_csv(path: &Path) -> Result<ConfusionMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_cm_csv_str(&text)
}
