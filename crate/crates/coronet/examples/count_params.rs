//! Build the full CoroNet graph and print the complete per-layer parameter
//! table (the CLI's `count-params` shows the rolled-up version).
//!
//! Run with: `cargo run --example count_params`

use coronet::model::{build_coronet_graph, count_parameters, ArchitectureConfig, Variant};

fn main() -> coronet::Result<()> {
    let config = ArchitectureConfig::new(Variant::Full, 4).with_input(160, 160);
    let graph = build_coronet_graph(&config)?;
    let (count, rows) = count_parameters(&graph)?;

    println!("{:<26} {:>20} {:>12} {:>11}", "Layer", "Output", "Param #", "Trainable");
    for row in rows.iter().filter(|r| r.params > 0 || r.name == "flatten") {
        let output = row
            .output
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(" x ");
        println!(
            "{:<26} {:>20} {:>12} {:>11}",
            row.name, output, row.params, row.trainable
        );
    }
    println!();
    println!("Total Parameters:         {}", count.total);
    println!("Trainable Parameters:     {}", count.trainable);
    println!("Non-trainable Parameters: {}", count.non_trainable);
    Ok(())
}
