//! Parse a confusion-matrix CSV and print the full metrics report, both as a
//! table and as JSON.
//!
//! Run with: `cargo run --example metrics_report`

use coronet::metrics::parse_cm_csv_str;

const CM_CSV: &str = "\
actual\\predicted,COVID-19,Normal,Pneumonia
COVID-19,33,4,0
Normal,1,128,21
Pneumonia,0,7,143
";

fn main() -> coronet::Result<()> {
    let cm = parse_cm_csv_str(CM_CSV)?;
    let report = cm.report()?;
    println!("{report}");

    for (i, class) in cm.classes().iter().enumerate() {
        let (tp, fp, fn_, tn) = cm.class_counts(i);
        println!("{class}: TP={tp} FP={fp} FN={fn_} TN={tn}");
    }
    println!();
    println!("{}", report.to_json());
    Ok(())
}
