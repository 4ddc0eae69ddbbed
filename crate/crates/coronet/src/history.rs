//! Training-history CSV (epoch, train_loss, train_acc, val_loss, val_acc)
//! and per-epoch curve exports, including a static SVG chart of the accuracy
//! and loss trajectories.

use crate::error::{Error, Result};
use crate::train::EpochRecord;
use std::fmt::Write as _;
use std::path::Path;

const HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

/// Render history rows as CSV. Validation cells are empty when the run had no
/// validation set. Formatting is fixed-precision, so identical runs produce
/// identical bytes.
pub fn render_history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for row in history {
        let val_loss = row.val_loss.map(|v| format!("{v:.6}")).unwrap_or_default();
        let val_acc = row.val_acc.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{},{}",
            row.epoch, row.train_loss, row.train_acc, val_loss, val_acc
        );
    }
    out
}

pub fn parse_history_csv_str(text: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        Some((_, h)) => {
            return Err(Error::parse(
                1,
                format!("expected header '{HEADER}', got '{}'", h.trim()),
            ))
        }
        None => return Err(Error::parse(1, "empty history file".to_string())),
    }
    let mut history = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                line_no,
                format!("expected 5 fields, got {}", fields.len()),
            ));
        }
        let number = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(line_no, format!("bad {what} '{s}'")))
        };
        let optional = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.trim().is_empty() {
                Ok(None)
            } else {
                number(s, what).map(Some)
            }
        };
        history.push(EpochRecord {
            epoch: fields[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad epoch '{}'", fields[0])))?,
            train_loss: number(fields[1], "train_loss")?,
            train_acc: number(fields[2], "train_acc")?,
            val_loss: optional(fields[3], "val_loss")?,
            val_acc: optional(fields[4], "val_acc")?,
        });
    }
    Ok(history)
}

pub fn parse_history_csv(path: &Path) -> Result<Vec<EpochRecord>> {
    parse_history_csv_str(&std::fs::read_to_string(path)?)
}

/// Two-panel plot data: `(accuracy_csv, loss_csv)` with one row per epoch.
pub fn curve_tables(history: &[EpochRecord]) -> (String, String) {
    let mut acc = String::from("epoch,train_acc,val_acc\n");
    let mut loss = String::from("epoch,train_loss,val_loss\n");
    for row in history {
        let va = row.val_acc.map(|v| format!("{v:.6}")).unwrap_or_default();
        let vl = row.val_loss.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(acc, "{},{:.6},{}", row.epoch, row.train_acc, va);
        let _ = writeln!(loss, "{},{:.6},{}", row.epoch, row.train_loss, vl);
    }
    (acc, loss)
}

/// Static two-panel SVG: accuracy on the left, loss on the right, training
/// series solid and validation dashed.
pub fn render_curves_svg(history: &[EpochRecord]) -> Result<String> {
    if history.is_empty() {
        return Err(Error::input("cannot chart an empty history".to_string()));
    }
    const W: f64 = 420.0;
    const H: f64 = 300.0;
    const MARGIN: f64 = 40.0;

    let epochs: Vec<f64> = history.iter().map(|r| r.epoch as f64).collect();
    let train_acc: Vec<f64> = history.iter().map(|r| r.train_acc).collect();
    let val_acc: Vec<Option<f64>> = history.iter().map(|r| r.val_acc).collect();
    let train_loss: Vec<f64> = history.iter().map(|r| r.train_loss).collect();
    let val_loss: Vec<Option<f64>> = history.iter().map(|r| r.val_loss).collect();

    let loss_max = train_loss
        .iter()
        .copied()
        .chain(val_loss.iter().flatten().copied())
        .fold(f64::MIN, f64::max)
        .max(1e-9);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
        2.0 * W,
        H,
        2.0 * W,
        H
    );
    let panel = |svg: &mut String,
                 x_off: f64,
                 title: &str,
                 y_max: f64,
                 train: &[f64],
                 val: &[Option<f64>]| {
        let _ = write!(
            svg,
            "<rect x=\"{:.1}\" y=\"{MARGIN}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>",
            x_off + MARGIN,
            W - 2.0 * MARGIN,
            H - 2.0 * MARGIN
        );
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"25\" text-anchor=\"middle\" font-size=\"14\">{title}</text>",
            x_off + W / 2.0
        );
        let span = (epochs.last().unwrap() - epochs[0]).max(1.0);
        let to_xy = |i: usize, v: f64| -> (f64, f64) {
            let x = x_off + MARGIN + (epochs[i] - epochs[0]) / span * (W - 2.0 * MARGIN);
            let y = H - MARGIN - (v / y_max).clamp(0.0, 1.0) * (H - 2.0 * MARGIN);
            (x, y)
        };
        let polyline = |pts: &[(f64, f64)], dash: bool| -> String {
            let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
            format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\"{}/>",
                coords.join(" "),
                if dash { "#d62728" } else { "#1f77b4" },
                if dash { " stroke-dasharray=\"5,3\"" } else { "" }
            )
        };
        let train_pts: Vec<(f64, f64)> =
            train.iter().enumerate().map(|(i, &v)| to_xy(i, v)).collect();
        svg.push_str(&polyline(&train_pts, false));
        let val_pts: Vec<(f64, f64)> = val
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| to_xy(i, v)))
            .collect();
        if !val_pts.is_empty() {
            svg.push_str(&polyline(&val_pts, true));
        }
    };
    panel(&mut svg, 0.0, "Accuracy", 1.0, &train_acc, &val_acc);
    panel(&mut svg, W, "Loss", loss_max, &train_loss, &val_loss);
    svg.push_str("</svg>\n");
    Ok(svg)
}
