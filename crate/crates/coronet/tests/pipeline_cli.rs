//! End-to-end command-line behavior: golden metric reports, the layer table,
//! curve export, fine-tuning, and the no-partial-artifacts guarantee.

mod common;

use common::*;
use coronet::cli::run_with_writer;

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run_with_writer(args.iter().map(|s| s.to_string()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

const FOLD1_CM: &str = "actual\\predicted,COVID-19,Normal,PneumoniaBacterial,PneumoniaViral\n\
COVID-19,60,0,0,0\n\
Normal,1,67,5,0\n\
PneumoniaBacterial,0,2,62,10\n\
PneumoniaViral,2,5,10,53\n";

#[test]
fn metrics_reproduces_fold1_report() {
    let dir = tempfile::tempdir().unwrap();
    let cm_path = dir.path().join("fold1.csv");
    std::fs::write(&cm_path, FOLD1_CM).unwrap();
    let (code, out) = run(&["coronet", "metrics", "--cm", cm_path.to_str().unwrap()]);
    assert_eq!(code, 0, "stdout: {out}");
    // 242/277 renders as 87.36%; macro F-measure rounds to 87.6
    assert!(out.contains("Overall Accuracy: 87.36%"), "stdout: {out}");
    let average_line = out
        .lines()
        .find(|l| l.starts_with("Average"))
        .expect("macro row");
    assert!(average_line.contains("87.6"), "macro row: {average_line}");
}

#[test]
fn metrics_writes_json_with_exact_fractions() {
    let dir = tempfile::tempdir().unwrap();
    let cm_path = dir.path().join("fold1.csv");
    std::fs::write(&cm_path, FOLD1_CM).unwrap();
    let out_dir = dir.path().join("report");
    let (code, _) = run(&[
        "coronet",
        "metrics",
        "--cm",
        cm_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    let accuracy = json["accuracy"].as_f64().unwrap();
    assert_eq!(accuracy, 242.0 / 277.0);
    let covid_recall = json["per_class"][0]["recall"].as_f64().unwrap();
    assert_eq!(covid_recall, 1.0); // 60/60
    assert!(out_dir.join("report.txt").exists());
}

#[test]
fn metrics_failure_leaves_no_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cm_path = dir.path().join("bad.csv");
    // negative cell: parse error after the output directory is requested
    std::fs::write(&cm_path, "actual\\predicted,a,b\na,3,-1\nb,0,2\n").unwrap();
    let out_dir = dir.path().join("never");
    let (code, _) = run(&[
        "coronet",
        "metrics",
        "--cm",
        cm_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(!out_dir.exists(), "failed run must not create the output dir");
    // no stray staging directories either
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with(".staging"))
        .collect();
    assert!(leftovers.is_empty(), "staging dirs left behind: {leftovers:?}");
}

#[test]
fn count_params_prints_reference_totals() {
    let (code, out) = run(&[
        "coronet",
        "count-params",
        "--variant",
        "full",
        "--classes",
        "4",
        "--input",
        "160",
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("Total Parameters: 33,969,964"), "stdout: {out}");
    assert!(out.contains("Trainable Parameters: 33,915,436"));
    assert!(out.contains("Non-trainable Parameters: 54,528"));
    assert!(out.contains("20861480"), "backbone row missing: {out}");
    assert!(out.contains("5 x 5 x 2048"), "backbone output shape: {out}");
    assert!(out.contains("13107456"));
    assert!(out.contains("1028"));
}

#[test]
fn count_params_rejects_undersized_input() {
    // the second stem conv (3x3, valid) no longer fits after one stride-2 step
    let (code, _) = run(&[
        "coronet",
        "count-params",
        "--variant",
        "full",
        "--classes",
        "4",
        "--input",
        "4",
    ]);
    assert_eq!(code, 1);
}

#[test]
fn unknown_flag_is_usage_error() {
    let (code, _) = run(&["coronet", "metrics", "--does-not-exist", "x"]);
    assert_eq!(code, 2);
}

#[test]
fn missing_file_is_runtime_error() {
    let (code, _) = run(&["coronet", "metrics", "--cm", "/nonexistent/cm.csv"]);
    assert_eq!(code, 1);
}

#[test]
fn curves_exports_plot_data_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let hist_path = dir.path().join("history.csv");
    std::fs::write(
        &hist_path,
        "epoch,train_loss,train_acc,val_loss,val_acc\n\
         1,1.200000,0.300000,1.300000,0.250000\n\
         2,0.800000,0.600000,0.900000,0.500000\n\
         3,0.500000,0.900000,0.700000,0.750000\n",
    )
    .unwrap();
    let out_dir = dir.path().join("curves");
    let (code, _) = run(&[
        "coronet",
        "curves",
        "--history",
        hist_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let acc = std::fs::read_to_string(out_dir.join("accuracy_curve.csv")).unwrap();
    assert!(acc.starts_with("epoch,train_acc,val_acc\n"));
    assert_eq!(acc.lines().count(), 4);
    let svg = std::fs::read_to_string(out_dir.join("curves.svg")).unwrap();
    assert!(svg.contains("<svg"));
    assert!(std::fs::read_to_string(out_dir.join("loss_curve.csv"))
        .unwrap()
        .contains("0.800000"));
}

#[test]
fn train_then_finetune_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_pgm_dataset(dir.path(), 3, 16, 77);
    let train_out = dir.path().join("train4");
    let (code, _) = run(&[
        "coronet", "train",
        "--manifest", manifest.to_str().unwrap(),
        "--variant", "mini",
        "--classes", "4",
        "--input", "16",
        "--seed", "5",
        "--epochs", "1",
        "--batch", "4",
        "--out", train_out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let weights = train_out.join("weights.bin");
    assert!(weights.exists());
    let history = std::fs::read_to_string(train_out.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,train_acc,val_loss,val_acc\n"));
    assert_eq!(history.lines().count(), 2); // header + 1 epoch

    // fine-tune the 4-class weights down to 3 classes with a frozen backbone
    let ft_out = dir.path().join("ft3");
    let (code, out) = run(&[
        "coronet", "finetune",
        "--manifest", manifest.to_str().unwrap(),
        "--weights", weights.to_str().unwrap(),
        "--freeze-backbone",
        "--variant", "mini",
        "--classes", "3",
        "--input", "16",
        "--seed", "6",
        "--epochs", "1",
        "--batch", "4",
        "--out", ft_out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("4-class model to 3 classes"), "{out}");
    assert!(ft_out.join("weights.bin").exists());

    // the fine-tuned file now carries a 3-way head
    let arity = coronet::model::weights_file_head_arity(&ft_out.join("weights.bin")).unwrap();
    assert_eq!(arity, Some(3));
}

#[test]
fn kfold_rejects_classes_smaller_than_fold_count() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_pgm_dataset(dir.path(), 2, 16, 3); // 2 per class < 4 folds
    let out_dir = dir.path().join("cv");
    let (code, _) = run(&[
        "coronet", "kfold",
        "--manifest", manifest.to_str().unwrap(),
        "--variant", "mini",
        "--classes", "4",
        "--input", "16",
        "--seed", "1",
        "--epochs", "1",
        "--batch", "4",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(!out_dir.exists());
}

#[test]
fn kfold_writes_dataset_style_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_pgm_dataset(dir.path(), 4, 16, 13);
    let out_dir = dir.path().join("cv");
    let (code, out) = run(&[
        "coronet", "kfold",
        "--manifest", manifest.to_str().unwrap(),
        "--variant", "mini",
        "--classes", "2",
        "--input", "16",
        "--seed", "3",
        "--epochs", "1",
        "--batch", "4",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{out}");
    for fold in 1..=4 {
        let cm_text =
            std::fs::read_to_string(out_dir.join(format!("fold{fold}_cm.csv"))).unwrap();
        assert!(cm_text.starts_with("actual\\predicted,COVID-19,NonCOVID\n"));
        let parsed = coronet::metrics::parse_cm_csv_str(&cm_text).unwrap();
        assert_eq!(parsed.total(), 4); // 16 records over 4 folds
        assert!(out_dir.join(format!("fold{fold}_report.json")).exists());
        assert!(out_dir.join(format!("fold{fold}_history.csv")).exists());
    }
    let cv: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("cv_report.json")).unwrap())
            .unwrap();
    assert_eq!(cv["folds"].as_array().unwrap().len(), 4);
    assert!(cv["mean"]["accuracy"].is_number());
}

#[test]
fn relative_manifest_paths_resolve_against_manifest_dir(){
    // run from a different working directory than the dataset
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("data");
    std::fs::create_dir(&sub).unwrap();
    let manifest = write_pgm_dataset(&sub, 4, 16, 13);
    assert!(manifest.starts_with(&sub));
    let out_dir = dir.path().join("out");
    let (code, _) = run(&[
        "coronet", "train",
        "--manifest", manifest.to_str().unwrap(),
        "--variant", "mini",
        "--classes", "4",
        "--input", "16",
        "--seed", "2",
        "--epochs", "1",
        "--batch", "8",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
}

