use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{Dense, Gradients, Network};
use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_factor: f64,
    /// Epochs without improvement of the monitored loss before the learning
    /// rate is multiplied by `plateau_factor`.
    pub plateau_patience: usize,
    /// One weight per training row; scales that row's loss term.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_sample_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.9999,
            adam_epsilon: 1e-8,
            batch_size: 128,
            max_epochs: 30,
            plateau_factor: 0.1,
            plateau_patience: 5,
            per_sample_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must be in (0, 1), got {v}"));
            }
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad(format!(
                "plateau_factor must be in (0, 1), got {}",
                self.plateau_factor
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.plateau_patience == 0 {
            return bad("batch_size, max_epochs and plateau_patience must be >= 1".into());
        }
        if self.adam_epsilon <= 0.0 {
            return bad("adam_epsilon must be positive".into());
        }
        Ok(())
    }
}

/// First and second moment buffers for Adam.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    m: Vec<Dense<T>>,
    v: Vec<Dense<T>>,
    steps: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(net: &Network<T>) -> Self {
        let zeros: Vec<Dense<T>> = net
            .layers()
            .iter()
            .map(|l| Dense {
                weights: Array2::zeros(l.weights.raw_dim()),
                bias: Array1::zeros(l.bias.raw_dim()),
            })
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>, lr: f64, cfg: &TrainConfig) {
        self.steps += 1;
        let t = self.steps as i32;
        let b1 = T::of(cfg.beta1);
        let b2 = T::of(cfg.beta2);
        let one = T::one();
        let c1 = T::of(1.0 - cfg.beta1.powi(t));
        let c2 = T::of(1.0 - cfg.beta2.powi(t));
        let lr = T::of(lr);
        let eps = T::of(cfg.adam_epsilon);
        let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((layer, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

/// Reduce-on-plateau schedule: a loss counts as an improvement when it is
/// below `best * (1 - 1e-4)`.
#[derive(Clone, Debug)]
struct Plateau {
    best: f64,
    bad_epochs: usize,
    triggers: usize,
}

impl Plateau {
    const REL_THRESHOLD: f64 = 1e-4;

    fn new() -> Self {
        Plateau {
            best: f64::INFINITY,
            bad_epochs: 0,
            triggers: 0,
        }
    }

    /// Returns true when the learning rate should be reduced.
    fn observe(&mut self, loss: f64, patience: usize) -> bool {
        if !self.best.is_finite() || loss < self.best - Self::REL_THRESHOLD * self.best.abs() {
            self.best = loss;
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= patience {
            self.bad_epochs = 0;
            self.triggers += 1;
            return true;
        }
        false
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    /// Loss used for plateau detection (validation loss when available).
    pub monitored_loss: Vec<f64>,
    /// Learning rate in effect during each epoch.
    pub learning_rates: Vec<f64>,
    pub plateau_triggers: usize,
}

/// Optimizer plus learning-rate schedule. Keeps Adam state across passes, so
/// alternating passes over different subsets share one optimizer.
#[derive(Clone, Debug)]
pub struct Trainer<T> {
    cfg: TrainConfig,
    adam: Adam<T>,
    lr: f64,
    plateau: Plateau,
    epoch: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(net: &Network<T>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Trainer {
            lr: cfg.learning_rate,
            adam: Adam::new(net),
            cfg,
            plateau: Plateau::new(),
            epoch: 0,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn adam(&self) -> &Adam<T> {
        &self.adam
    }

    /// One shuffled mini-batch pass over `data`. Returns the mean training
    /// loss (dropout applied if enabled on `net`).
    pub fn pass(
        &mut self,
        net: &mut Network<T>,
        data: &EncodedDataset<T>,
        weights: Option<&[f64]>,
    ) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Parameter("cannot train on an empty dataset".into()));
        }
        if let Some(w) = weights {
            if w.len() != data.len() {
                return Err(Error::Parameter(format!(
                    "{} sample weights for {} rows",
                    w.len(),
                    data.len()
                )));
            }
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut net.rng);

        let mut total = 0.0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let x = data.x.select(Axis(0), chunk);
            let labels: Vec<u8> = chunk.iter().map(|&i| data.y[i]).collect();
            let w: Option<Vec<T>> = weights.map(|w| chunk.iter().map(|&i| T::of(w[i])).collect());
            let (loss, grads) = net.train_step_gradients(x.view(), &labels, w.as_deref())?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::DivergedTraining { epoch: self.epoch });
            }
            self.adam.step(net, &grads, self.lr, &self.cfg);
            if !net.all_finite() {
                return Err(Error::DivergedTraining { epoch: self.epoch });
            }
            total += loss * chunk.len() as f64;
        }
        self.epoch += 1;
        Ok(total / data.len() as f64)
    }

    /// Feeds one epoch's monitored loss to the plateau schedule.
    pub fn observe(&mut self, monitored_loss: f64) -> bool {
        let reduce = self.plateau.observe(monitored_loss, self.cfg.plateau_patience);
        if reduce {
            self.lr *= self.cfg.plateau_factor;
        }
        reduce
    }

    /// Trains for `max_epochs`, monitoring `validation` loss (or the training
    /// loss when no validation set is given) for plateau scheduling.
    pub fn fit(
        &mut self,
        net: &mut Network<T>,
        train: &EncodedDataset<T>,
        validation: Option<&EncodedDataset<T>>,
    ) -> Result<TrainHistory> {
        let weights = self.cfg.per_sample_weights.clone();
        let mut history = TrainHistory::default();
        for _ in 0..self.cfg.max_epochs {
            history.learning_rates.push(self.lr);
            let train_loss = self.pass(net, train, weights.as_deref())?;
            let monitored = match validation {
                Some(v) => mean_loss(net, v, None)?,
                None => train_loss,
            };
            if !monitored.is_finite() {
                return Err(Error::DivergedTraining {
                    epoch: self.epoch - 1,
                });
            }
            history.train_loss.push(train_loss);
            history.monitored_loss.push(monitored);
            self.observe(monitored);
        }
        history.plateau_triggers = self.plateau.triggers;
        Ok(history)
    }
}

/// Trains `net` in place with plateau scheduling on the training loss.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    data: &EncodedDataset<T>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    train_with_validation(net, data, None, cfg)
}

pub fn train_with_validation<T: Scalar>(
    net: &mut Network<T>,
    data: &EncodedDataset<T>,
    validation: Option<&EncodedDataset<T>>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    Trainer::new(net, cfg.clone())?.fit(net, data, validation)
}

/// Mean loss without dropout, computed in batches.
pub fn mean_loss<T: Scalar>(
    net: &Network<T>,
    data: &EncodedDataset<T>,
    weights: Option<&[f64]>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Parameter("cannot evaluate loss on an empty dataset".into()));
    }
    const CHUNK: usize = 4096;
    let mut total = 0.0;
    for start in (0..data.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(data.len());
        let x = data.x.slice(ndarray::s![start..end, ..]);
        let w: Option<Vec<T>> = weights.map(|w| w[start..end].iter().map(|&v| T::of(v)).collect());
        let (loss, _) = net.loss_and_gradients(x, &data.y[start..end], w.as_deref())?;
        total += loss.as_f64() * (end - start) as f64;
    }
    Ok(total / data.len() as f64)
}
