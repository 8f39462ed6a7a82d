//! Selective retraining and the end-to-end repair pipeline:
//! profile → slice → cluster → selective training → before/after evaluation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{build_path_table, get_samples_divided, ClusterParams, SampleSplit};
use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, FairnessReport, FairnessThresholds};
use crate::nn::{Network, TrainConfig, Trainer};
use crate::scalar::Scalar;
use crate::slicing::{profile_averages, slice_with_profile, SeedNeuron, SliceParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interleave {
    /// Every retrain epoch: one ordinary pass (dropout off), then one biased
    /// pass (dropout on).
    #[default]
    EpochAlternating,
    /// All ordinary epochs first, then all biased epochs.
    BlockSequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairConfig {
    pub theta: f64,
    pub gamma: f64,
    pub dropout_rate: f64,
    pub retrain_epochs: usize,
    /// Optimizer settings for retraining. The learning rate stays constant;
    /// `max_epochs` and the plateau fields are not used here.
    pub train: TrainConfig,
    pub interleave: Interleave,
    pub seed_neuron: SeedNeuron,
    /// Seeds shuffling and dropout masks during retraining.
    pub seed: u64,
    pub thresholds: FairnessThresholds,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            theta: 0.1,
            gamma: 0.8,
            dropout_rate: 0.7,
            retrain_epochs: 20,
            train: TrainConfig {
                learning_rate: 3e-4,
                ..TrainConfig::default()
            },
            interleave: Interleave::EpochAlternating,
            seed_neuron: SeedNeuron::Predicted,
            seed: 0,
            thresholds: FairnessThresholds::default(),
        }
    }
}

impl RepairConfig {
    pub fn validate(&self) -> Result<()> {
        ClusterParams::new(self.theta)?;
        SliceParams::new(self.gamma)?;
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Parameter(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.retrain_epochs == 0 {
            return Err(Error::Parameter("retrain_epochs must be >= 1".into()));
        }
        self.train.validate()
    }

    pub fn slice_params(&self) -> SliceParams {
        SliceParams {
            gamma: self.gamma,
            seed_neuron: self.seed_neuron,
        }
    }
}

/// Wall-clock seconds per pipeline stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub slicing: f64,
    pub clustering: f64,
    pub training: f64,
    pub evaluation: f64,
    pub total: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.slicing + self.clustering + self.training + self.evaluation
    }
}

#[derive(Clone, Debug)]
pub struct RepairOutcome<T> {
    pub network: Network<T>,
    pub before: FairnessReport,
    pub after: FairnessReport,
    pub split: SampleSplit,
    pub gamma: f64,
    pub distinct_paths: usize,
    pub timings: StageTimings,
}

/// JSON report for a repair run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairSummary {
    pub before: FairnessReport,
    pub after: FairnessReport,
    pub theta: f64,
    pub gamma: f64,
    pub max_frequency: usize,
    pub distinct_paths: usize,
    pub ordinary_samples: usize,
    pub biased_samples: usize,
    pub timings: StageTimings,
}

impl<T: Scalar> RepairOutcome<T> {
    pub fn summary(&self) -> RepairSummary {
        RepairSummary {
            before: self.before.clone(),
            after: self.after.clone(),
            theta: self.split.theta,
            gamma: self.gamma,
            max_frequency: self.split.max_frequency,
            distinct_paths: self.distinct_paths,
            ordinary_samples: self.split.ordinary_sample_ids.len(),
            biased_samples: self.split.biased_sample_ids.len(),
            timings: self.timings,
        }
    }
}

/// Continues training `net` in place: ordinary samples with dropout off,
/// biased samples with dropout on, sharing one fresh Adam state.
pub fn selective_train<T: Scalar>(
    net: &mut Network<T>,
    ordinary: &EncodedDataset<T>,
    biased: &EncodedDataset<T>,
    cfg: &RepairConfig,
) -> Result<()> {
    cfg.validate()?;
    if ordinary.is_empty() && biased.is_empty() {
        return Err(Error::Parameter("nothing to retrain on".into()));
    }
    net.set_dropout_rate(cfg.dropout_rate)?;
    net.reseed(cfg.seed);
    let mut trainer = Trainer::new(net, cfg.train.clone())?;
    let ordinary_pass = |net: &mut Network<T>, trainer: &mut Trainer<T>| -> Result<()> {
        if !ordinary.is_empty() {
            net.set_dropout(false);
            trainer.pass(net, ordinary, None)?;
        }
        Ok(())
    };
    let biased_pass = |net: &mut Network<T>, trainer: &mut Trainer<T>| -> Result<()> {
        if !biased.is_empty() {
            net.set_dropout(true);
            trainer.pass(net, biased, None)?;
        }
        Ok(())
    };
    match cfg.interleave {
        Interleave::EpochAlternating => {
            for _ in 0..cfg.retrain_epochs {
                ordinary_pass(net, &mut trainer)?;
                biased_pass(net, &mut trainer)?;
            }
        }
        Interleave::BlockSequential => {
            for _ in 0..cfg.retrain_epochs {
                ordinary_pass(net, &mut trainer)?;
            }
            for _ in 0..cfg.retrain_epochs {
                biased_pass(net, &mut trainer)?;
            }
        }
    }
    net.set_dropout(false);
    Ok(())
}

/// How retraining treats the training samples.
#[derive(Clone, Debug, PartialEq)]
pub enum RetrainPlan {
    /// Dropout on exactly the biased samples of this split.
    Selective(SampleSplit),
    /// Dropout on every sample.
    PureDropout,
    /// Dropout on no sample.
    PureOrdinary,
}

/// Slices `train` and divides its samples. Returns the split, the number of
/// distinct paths, and the slicing/clustering timings.
pub fn slice_and_divide<T: Scalar>(
    net: &Network<T>,
    train: &EncodedDataset<T>,
    cfg: &RepairConfig,
) -> Result<(SampleSplit, usize, StageTimings)> {
    cfg.validate()?;
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let params = cfg.slice_params();
    let profile = profile_averages(net, train).map_err(|e| e.in_stage("slicing"))?;
    let paths = slice_with_profile(net, train, &params, &profile).map_err(|e| e.in_stage("slicing"))?;
    timings.slicing = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let table = build_path_table(&paths).map_err(|e| e.in_stage("clustering"))?;
    let split = get_samples_divided(&table, &ClusterParams { theta: cfg.theta })
        .map_err(|e| e.in_stage("clustering"))?;
    timings.clustering = t.elapsed().as_secs_f64();
    Ok((split, table.entries.len(), timings))
}

/// Biased set of `biased_count` samples drawn uniformly at random.
pub fn random_split(n: usize, biased_count: usize, theta: f64, seed: u64) -> SampleSplit {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = biased_count.min(n);
    let mut biased = ids[..take].to_vec();
    let mut ordinary = ids[take..].to_vec();
    biased.sort_unstable();
    ordinary.sort_unstable();
    SampleSplit {
        biased_path_keys: Vec::new(),
        ordinary_sample_ids: ordinary,
        biased_sample_ids: biased,
        theta,
        max_frequency: 0,
        threshold: 0.0,
    }
}

/// Retrains a copy of `net` on `train` according to `plan` and reports
/// before/after metrics on `eval`. Timings cover training and evaluation.
pub fn retrain<T: Scalar>(
    net: &Network<T>,
    train: &EncodedDataset<T>,
    eval: &EncodedDataset<T>,
    cfg: &RepairConfig,
    plan: &RetrainPlan,
) -> Result<(Network<T>, FairnessReport, FairnessReport, StageTimings)> {
    let mut timings = StageTimings::default();
    let empty = train.subset(&[]);
    let t = Instant::now();
    let mut repaired = net.clone();
    match plan {
        RetrainPlan::Selective(split) => {
            let ordinary = train.subset(&split.ordinary_sample_ids);
            let biased = train.subset(&split.biased_sample_ids);
            selective_train(&mut repaired, &ordinary, &biased, cfg)
        }
        RetrainPlan::PureDropout => selective_train(&mut repaired, &empty, train, cfg),
        RetrainPlan::PureOrdinary => selective_train(&mut repaired, train, &empty, cfg),
    }
    .map_err(|e| e.in_stage("training"))?;
    timings.training = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let before = evaluate(net, eval, &cfg.thresholds).map_err(|e| e.in_stage("evaluation"))?;
    let after = evaluate(&repaired, eval, &cfg.thresholds).map_err(|e| e.in_stage("evaluation"))?;
    timings.evaluation = t.elapsed().as_secs_f64();
    Ok((repaired, before, after, timings))
}

/// Full pipeline on a trained network: slice `train`, split its samples,
/// retrain selectively, and evaluate before/after on `eval`.
pub fn repair_network<T: Scalar>(
    net: &Network<T>,
    train: &EncodedDataset<T>,
    eval: &EncodedDataset<T>,
    cfg: &RepairConfig,
) -> Result<RepairOutcome<T>> {
    let start = Instant::now();
    let (split, distinct_paths, mut timings) = slice_and_divide(net, train, cfg)?;
    let (network, before, after, t) =
        retrain(net, train, eval, cfg, &RetrainPlan::Selective(split.clone()))?;
    timings.training = t.training;
    timings.evaluation = t.evaluation;
    timings.total = start.elapsed().as_secs_f64();
    Ok(RepairOutcome {
        network,
        before,
        after,
        split,
        gamma: cfg.gamma,
        distinct_paths,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{NetworkConfig, OutputHead};
    use ndarray::Array2;

    fn toy(n: usize) -> EncodedDataset<f64> {
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 10.0);
        let y = (0..n).map(|i| u8::from((i * 7) % 11 > 5)).collect();
        let s = (0..n).map(|i| (i % 2) as u8).collect();
        EncodedDataset::from_parts(x, y, s).unwrap()
    }

    fn net() -> Network<f64> {
        Network::new(NetworkConfig::three_hidden(3, 6, OutputHead::Softmax, 4)).unwrap()
    }

    fn cfg() -> RepairConfig {
        RepairConfig {
            retrain_epochs: 3,
            train: TrainConfig {
                batch_size: 8,
                ..TrainConfig::default()
            },
            seed: 9,
            ..RepairConfig::default()
        }
    }

    #[test]
    fn empty_biased_set_equals_continued_training() {
        let data = toy(40);
        let mut a = net();
        selective_train(&mut a, &data, &data.subset(&[]), &cfg()).unwrap();

        let mut b = net();
        b.set_dropout_rate(cfg().dropout_rate).unwrap();
        b.reseed(9);
        b.set_dropout(false);
        let mut trainer = Trainer::new(&b, cfg().train).unwrap();
        for _ in 0..3 {
            trainer.pass(&mut b, &data, None).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn zero_rate_equals_plain_passes_in_order() {
        let data = toy(40);
        let ordinary = data.subset(&(0..30).collect::<Vec<_>>());
        let biased = data.subset(&(30..40).collect::<Vec<_>>());
        let mut c = cfg();
        c.dropout_rate = 0.0;
        let mut a = net();
        selective_train(&mut a, &ordinary, &biased, &c).unwrap();

        let mut b = net();
        b.set_dropout_rate(0.0).unwrap();
        b.reseed(9);
        let mut trainer = Trainer::new(&b, c.train.clone()).unwrap();
        for _ in 0..3 {
            trainer.pass(&mut b, &ordinary, None).unwrap();
            trainer.pass(&mut b, &biased, None).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn pipeline_is_deterministic_and_pure() {
        let data = toy(60);
        let original = net();
        let snapshot = crate::nn::to_json_string(&original).unwrap();
        let a = repair_network(&original, &data, &data, &cfg()).unwrap();
        let b = repair_network(&original, &data, &data, &cfg()).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.split, b.split);
        assert_eq!(crate::nn::to_json_string(&original).unwrap(), snapshot);
        let t = a.timings;
        assert!(t.stage_sum() <= t.total * 1.05 + 1e-3);
        assert_eq!(
            a.split.ordinary_sample_ids.len() + a.split.biased_sample_ids.len(),
            data.len()
        );
    }

    #[test]
    fn random_split_sizes() {
        let s = random_split(10, 3, 0.1, 1);
        assert_eq!(s.biased_sample_ids.len(), 3);
        assert_eq!(s.ordinary_sample_ids.len(), 7);
    }
}
