//! Prints path-table statistics of a freshly trained naive model.
//!
//! cargo run -p fairpath --example paths -- data/compas-scores-two-years.csv compas 0.8

use std::env;

use fairpath::clustering::{build_path_table, get_samples_divided, ClusterParams};
use fairpath::data::{load_dataset, split, DatasetSchema};
use fairpath::experiment::ExperimentConfig;
use fairpath::nn::{train_with_validation, Network};
use fairpath::slicing::{slice_dataset, SliceParams};

fn main() -> fairpath::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let schema = DatasetSchema::resolve(&args[1])?;
    let gamma: f64 = args.get(2).and_then(|g| g.parse().ok()).unwrap_or(0.8);
    let (data, stats) = load_dataset::<f32>(&args[0], &schema)?;
    println!("{stats:?} features={}", data.n_features());
    let cfg = ExperimentConfig::default();
    let parts = split(&data, 0)?;
    let mut net = Network::new(cfg.network_config(&schema, data.n_features(), 0))?;
    train_with_validation(&mut net, &parts.train, Some(&parts.validation), &cfg.train)?;
    let paths = slice_dataset(&net, &parts.train, &SliceParams::new(gamma)?)?;
    let table = build_path_table(&paths)?;
    let freqs = table.frequencies();
    println!("distinct={} M={} top={:?}", freqs.len(), table.max_frequency, &freqs[..freqs.len().min(15)]);
    let sizes: Vec<usize> = paths.iter().take(5).map(|p| p.edges.len()).collect();
    println!("edges/path (first 5) = {sizes:?}");
    for theta in [1e-4, 1e-3, 0.01, 0.05, 0.1, 0.3, 1.0] {
        let s = get_samples_divided(&table, &ClusterParams::new(theta)?)?;
        println!("theta={theta}: biased={}", s.biased_sample_ids.len());
    }
    Ok(())
}
