//! Sweeps repair settings against a shared naive model per seed.
//!
//! cargo run -p fairpath --example sweep -- data/compas-scores-two-years.csv compas 3

use std::env;

use fairpath::data::{load_dataset, DatasetSchema};
use fairpath::experiment::{prepare_trial, ExperimentConfig};
use fairpath::metrics::evaluate;
use fairpath::repair::{random_split, retrain, slice_and_divide, RepairConfig, RetrainPlan};

fn main() -> fairpath::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let schema = DatasetSchema::resolve(&args[1])?;
    let seeds: usize = args.get(2).and_then(|t| t.parse().ok()).unwrap_or(3);
    let (data, _) = load_dataset::<f32>(&args[0], &schema)?;
    let cfg = ExperimentConfig::default();
    let ctxs: Vec<_> = (0..seeds)
        .map(|t| prepare_trial(&cfg, &schema, &data, t))
        .collect::<Result<_, _>>()?;
    let (mut acc0, mut dp0) = (0.0, 0.0);
    for c in &ctxs {
        let r = evaluate(&c.naive, &c.parts.test, &cfg.thresholds)?;
        acc0 += r.acc / seeds as f64;
        dp0 += r.dp.unwrap_or(1.0) / seeds as f64;
    }
    println!("naive acc={acc0:.3} dp={dp0:.3}");
    let list = |k: &str, d: &str| -> Vec<f64> { env::var(k).unwrap_or(d.into()).split(',').map(|v| v.parse().unwrap()).collect() };
    for &lr in &list("LR", "0.01") {
    for &theta in &list("THETA", "0.05") {
        for &gamma in &list("GAMMA", "0.8") {
            for &rate in &list("RATE", "0.5") {
                for &epochs in &list("EPOCHS", "20") {
                    let epochs = epochs as usize;
                    let (mut acc, mut dp, mut nb) = (0.0, 0.0, 0.0);
                    for c in &ctxs {
                        let rc = RepairConfig {
                            theta,
                            gamma,
                            dropout_rate: rate,
                            retrain_epochs: epochs,
                            seed: c.seed,
                            train: fairpath::nn::TrainConfig { learning_rate: lr, ..Default::default() },
                            ..RepairConfig::default()
                        };
                        let (split, _, _) = slice_and_divide(&c.naive, &c.parts.train, &rc)?;
                        nb += split.biased_sample_ids.len() as f64 / seeds as f64;
                        let plan = match env::var("PLAN").as_deref() {
                            Ok("rand") => RetrainPlan::Selective(random_split(
                                c.parts.train.len(),
                                split.biased_sample_ids.len(),
                                theta,
                                c.seed ^ 0x5eed_5eed,
                            )),
                            Ok("drop") => RetrainPlan::PureDropout,
                            Ok("ord") => RetrainPlan::PureOrdinary,
                            _ => RetrainPlan::Selective(split),
                        };
                        let (_, _, after, _) = retrain(&c.naive, &c.parts.train, &c.parts.test, &rc, &plan)?;
                        acc += after.acc / seeds as f64;
                        dp += after.dp.unwrap_or(1.0) / seeds as f64;
                    }
                    println!("lr={lr} theta={theta} gamma={gamma} rate={rate} epochs={epochs}: biased={nb:.0} acc={acc:.3} dp={dp:.3}");
                }
            }
        }
    }
    }
    Ok(())
}
