//! Runs every method on one dataset and prints the comparison tables.
//!
//! cargo run --release -p fairpath --example compare -- data/compas-scores-two-years.csv compas 3

use std::env;

use fairpath::experiment::{emit_table, emit_timing_table, run_experiment, ExperimentConfig, Method, TableFormat};

fn main() -> fairpath::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let mut cfg = ExperimentConfig {
        dataset: args.first().map(Into::into).unwrap_or_else(|| "data/compas-scores-two-years.csv".into()),
        schema: args.get(1).cloned().unwrap_or_else(|| "compas".into()),
        trials: args.get(2).and_then(|t| t.parse().ok()).unwrap_or(3),
        methods: Method::ALL.to_vec(),
        ..ExperimentConfig::default()
    };
    if let Some(e) = args.get(3).and_then(|t| t.parse().ok()) {
        cfg.train.max_epochs = e;
    }
    let report = run_experiment::<f32>(&cfg)?;
    print!("{}", emit_table(&report.records, TableFormat::Text));
    println!();
    print!("{}", emit_timing_table(&report.records));
    Ok(())
}
