use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    #[default]
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    /// Two-way softmax over class logits, trained with cross-entropy.
    Softmax,
    /// Single real-valued score, trained with squared error against `2y - 1`.
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub hidden_activation: HiddenActivation,
    pub output_head: OutputHead,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl NetworkConfig {
    pub const DEFAULT_DROPOUT: f64 = 0.5;

    /// Input layer, three hidden layers of `hidden` units, and an output layer
    /// sized for the head.
    pub fn three_hidden(inputs: usize, hidden: usize, head: OutputHead, seed: u64) -> Self {
        let outputs = match head {
            OutputHead::Softmax => 2,
            OutputHead::Linear => 1,
        };
        NetworkConfig {
            layer_sizes: vec![inputs, hidden, hidden, hidden, outputs],
            hidden_activation: HiddenActivation::Relu,
            output_head: head,
            dropout_rate: Self::DEFAULT_DROPOUT,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::NetworkConfig(format!(
                "need at least 2 layers, got {}",
                self.layer_sizes.len()
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::NetworkConfig("layer sizes must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::NetworkConfig(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.output_head == OutputHead::Linear && self.outputs() != 1 {
            return Err(Error::NetworkConfig(
                "linear head needs exactly one output neuron".into(),
            ));
        }
        if self.output_head == OutputHead::Softmax && self.outputs() < 2 {
            return Err(Error::NetworkConfig(
                "softmax head needs at least two output neurons".into(),
            ));
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
}

/// One fully-connected layer. `weights` has shape `(outputs, inputs)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Activations recorded for a single sample.
///
/// Index 0 is the input layer (`pre[0] == post[0] == x`). For the output
/// layer `pre` holds the logits and `post` the head output.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<T> {
    pub pre: Vec<Array1<T>>,
    pub post: Vec<Array1<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn output(&self) -> &Array1<T> {
        self.post.last().unwrap()
    }

    pub fn logits(&self) -> &Array1<T> {
        self.pre.last().unwrap()
    }
}

/// Batched activations, one row per sample. Same layout as [`ForwardTrace`].
#[derive(Clone, Debug)]
pub struct BatchTrace<T> {
    pub pre: Vec<Array2<T>>,
    pub post: Vec<Array2<T>>,
}

impl<T: Scalar> BatchTrace<T> {
    pub fn output(&self) -> &Array2<T> {
        self.post.last().unwrap()
    }

    pub fn logits(&self) -> &Array2<T> {
        self.pre.last().unwrap()
    }
}

/// Dense feed-forward network with ReLU hidden layers and a dropout layer
/// after every hidden layer.
#[derive(Clone, Debug)]
pub struct Network<T> {
    pub(crate) layers: Vec<Dense<T>>,
    pub(crate) config: NetworkConfig,
    pub(crate) dropout_enabled: bool,
    pub(crate) rng: ChaCha8Rng,
}

impl<T: Scalar> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
            && self.config == other.config
            && self.dropout_enabled == other.dropout_enabled
    }
}

impl<T: Scalar> Network<T> {
    /// He-style uniform initialisation, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`,
    /// zero biases.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    T::of(rng.gen_range(-limit..limit))
                });
                Dense {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Network {
            layers,
            config,
            dropout_enabled: false,
            rng,
        })
    }

    /// Builds a network from explicit layers. Shapes must chain and match
    /// `config.layer_sizes`.
    pub fn from_layers(config: NetworkConfig, layers: Vec<Dense<T>>) -> Result<Self> {
        config.validate()?;
        if layers.len() + 1 != config.layer_sizes.len() {
            return Err(Error::NetworkConfig(format!(
                "{} layers given for {} layer sizes",
                layers.len(),
                config.layer_sizes.len()
            )));
        }
        for (l, layer) in layers.iter().enumerate() {
            let want = (config.layer_sizes[l + 1], config.layer_sizes[l]);
            if layer.weights.dim() != want || layer.bias.len() != want.0 {
                return Err(Error::NetworkConfig(format!(
                    "layer {l}: weights {:?} / bias {} do not match sizes {want:?}",
                    layer.weights.dim(),
                    layer.bias.len()
                )));
            }
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Network {
            layers,
            config,
            dropout_enabled: false,
            rng,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn head(&self) -> OutputHead {
        self.config.output_head
    }

    pub fn input_size(&self) -> usize {
        self.config.inputs()
    }

    pub fn dropout_enabled(&self) -> bool {
        self.dropout_enabled
    }

    /// Toggles the dropout layers for subsequent training passes. Evaluation
    /// and tracing never apply dropout.
    pub fn set_dropout(&mut self, enabled: bool) {
        self.dropout_enabled = enabled;
    }

    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        let mut cfg = self.config.clone();
        cfg.dropout_rate = rate;
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }

    /// Reseeds the internal generator used for shuffling and dropout masks.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, got: usize) -> Result<()> {
        if got != self.input_size() {
            return Err(Error::InputShape {
                expected: self.input_size(),
                got,
            });
        }
        Ok(())
    }

    /// Full activation trace for one sample, dropout bypassed.
    pub fn forward_trace(&self, x: ArrayView1<T>) -> Result<ForwardTrace<T>> {
        self.check_input(x.len())?;
        let last = self.layers.len() - 1;
        let mut pre = vec![x.to_owned()];
        let mut post = vec![x.to_owned()];
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.weights.dot(post.last().unwrap()) + &layer.bias;
            let a = if l == last {
                apply_head(self.head(), z.view().insert_axis(Axis(0)))
                    .index_axis_move(Axis(0), 0)
            } else {
                z.mapv(relu)
            };
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardTrace { pre, post })
    }

    /// Batched trace, one row per sample, dropout bypassed.
    pub fn forward_batch(&self, x: ArrayView2<T>) -> Result<BatchTrace<T>> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut pre = vec![x.to_owned()];
        let mut post = vec![x.to_owned()];
        for (l, layer) in self.layers.iter().enumerate() {
            let z = post.last().unwrap().dot(&layer.weights.t()) + &layer.bias;
            let a = if l == last {
                apply_head(self.head(), z.view())
            } else {
                z.mapv(relu)
            };
            pre.push(z);
            post.push(a);
        }
        Ok(BatchTrace { pre, post })
    }

    /// Logits (softmax head) or scores (linear head), one row per sample.
    pub fn logits(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(x.ncols())?;
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t()) + &layer.bias;
            if l != last {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        Ok(a)
    }

    /// Hard 0/1 predictions: argmax for the softmax head, `score > 0` for
    /// the linear head.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Vec<u8>> {
        let logits = self.logits(x)?;
        Ok(logits.outer_iter().map(|row| self.decide(row)).collect())
    }

    /// Probability-like score for the positive class. For the linear head the
    /// score `s` is mapped to `clamp((s + 1) / 2, 0, 1)`, so the decision
    /// threshold 0 lands at 0.5.
    pub fn positive_scores(&self, x: ArrayView2<T>) -> Result<Vec<f64>> {
        let logits = self.logits(x)?;
        Ok(match self.head() {
            OutputHead::Softmax => {
                let probs = apply_head(OutputHead::Softmax, logits.view());
                probs.column(1).iter().map(|p| p.as_f64()).collect()
            }
            OutputHead::Linear => logits
                .column(0)
                .iter()
                .map(|s| ((s.as_f64() + 1.0) / 2.0).clamp(0.0, 1.0))
                .collect(),
        })
    }

    pub(crate) fn decide(&self, logits: ArrayView1<T>) -> u8 {
        match self.head() {
            OutputHead::Softmax => argmax(logits) as u8,
            OutputHead::Linear => u8::from(logits[0] > T::zero()),
        }
    }

    /// Inverted-dropout mask: each entry is 0 with probability `rate`,
    /// otherwise `1 / (1 - rate)`.
    pub(crate) fn sample_dropout_mask(&mut self, shape: (usize, usize)) -> Array2<T> {
        let rate = self.config.dropout_rate;
        let keep = T::of(1.0 / (1.0 - rate));
        let rng = &mut self.rng;
        Array2::from_shape_simple_fn(shape, || {
            if rng.gen::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
    }

    fn dropout_active(&self) -> bool {
        self.dropout_enabled && self.config.dropout_rate > 0.0
    }

    /// Loss over a batch and gradients for every weight matrix and bias.
    ///
    /// Softmax head: mean weighted cross-entropy. Linear head: mean weighted
    /// squared error against the target `2y - 1`. With `weights = None`
    /// every sample has weight 1. Dropout is never applied here; see
    /// [`Network::train_step_gradients`].
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<T>,
        labels: &[u8],
        weights: Option<&[T]>,
    ) -> Result<(T, Gradients<T>)> {
        self.backprop(x, labels, weights, None)
    }

    /// Like [`Network::loss_and_gradients`] but draws fresh dropout masks
    /// when dropout is enabled.
    pub(crate) fn train_step_gradients(
        &mut self,
        x: ArrayView2<T>,
        labels: &[u8],
        weights: Option<&[T]>,
    ) -> Result<(T, Gradients<T>)> {
        let masks = if self.dropout_active() {
            let hidden = &self.config.layer_sizes[1..self.config.layer_sizes.len() - 1];
            let hidden = hidden.to_vec();
            Some(
                hidden
                    .into_iter()
                    .map(|h| self.sample_dropout_mask((x.nrows(), h)))
                    .collect::<Vec<_>>(),
            )
        } else {
            None
        };
        self.backprop(x, labels, weights, masks.as_deref())
    }

    fn backprop(
        &self,
        x: ArrayView2<T>,
        labels: &[u8],
        weights: Option<&[T]>,
        masks: Option<&[Array2<T>]>,
    ) -> Result<(T, Gradients<T>)> {
        self.check_input(x.ncols())?;
        let batch = x.nrows();
        if batch == 0 {
            return Err(Error::Parameter("empty batch".into()));
        }
        if labels.len() != batch || weights.is_some_and(|w| w.len() != batch) {
            return Err(Error::Parameter(format!(
                "batch has {batch} rows but {} labels / {:?} weights",
                labels.len(),
                weights.map(<[T]>::len)
            )));
        }
        let last = self.layers.len() - 1;

        // Forward pass, keeping pre-activations and (masked) activations.
        let mut pre: Vec<Array2<T>> = Vec::with_capacity(self.layers.len());
        let mut acts: Vec<Array2<T>> = vec![x.to_owned()];
        for (l, layer) in self.layers.iter().enumerate() {
            let z = acts[l].dot(&layer.weights.t()) + &layer.bias;
            if l != last {
                let mut a = z.mapv(relu);
                if let Some(masks) = masks {
                    a *= &masks[l];
                }
                acts.push(a);
            }
            pre.push(z);
        }

        let logits = &pre[last];
        let n = T::of(batch as f64);
        let weight = |i: usize| weights.map_or(T::one(), |w| w[i]);
        let mut delta = Array2::<T>::zeros(logits.raw_dim());
        let mut loss = T::zero();
        match self.head() {
            OutputHead::Softmax => {
                let probs = apply_head(OutputHead::Softmax, logits.view());
                let log_probs = log_softmax(logits.view());
                for i in 0..batch {
                    let y = labels[i] as usize;
                    if y >= logits.ncols() {
                        return Err(Error::Parameter(format!("label {y} out of range")));
                    }
                    let w = weight(i);
                    loss -= w * log_probs[[i, y]];
                    for k in 0..logits.ncols() {
                        let target = if k == y { T::one() } else { T::zero() };
                        delta[[i, k]] = w * (probs[[i, k]] - target) / n;
                    }
                }
            }
            OutputHead::Linear => {
                let two = T::of(2.0);
                for i in 0..batch {
                    let w = weight(i);
                    let target = linear_target::<T>(labels[i]);
                    let diff = logits[[i, 0]] - target;
                    loss += w * diff * diff;
                    delta[[i, 0]] = w * two * diff / n;
                }
            }
        }
        loss /= n;

        let mut grads: Vec<Dense<T>> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let gw = delta.t().dot(&acts[l]);
            let gb = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut next = delta.dot(&self.layers[l].weights);
                Zip::from(&mut next)
                    .and(&pre[l - 1])
                    .for_each(|d, &z| {
                        if z <= T::zero() {
                            *d = T::zero();
                        }
                    });
                if let Some(masks) = masks {
                    next *= &masks[l - 1];
                }
                delta = next;
            }
            grads.push(Dense {
                weights: gw,
                bias: gb,
            });
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }
}

/// Per-layer gradients, same shapes as the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

pub(crate) fn linear_target<T: Scalar>(label: u8) -> T {
    if label == 1 {
        T::one()
    } else {
        -T::one()
    }
}

fn relu<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

pub(crate) fn argmax<T: Scalar>(v: ArrayView1<T>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn log_softmax<T: Scalar>(z: ArrayView2<T>) -> Array2<T> {
    let mut out = z.to_owned();
    for mut row in out.outer_iter_mut() {
        let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        let lse = row.fold(T::zero(), |s, &v| s + (v - max).exp()).ln() + max;
        row.mapv_inplace(|v| v - lse);
    }
    out
}

fn apply_head<T: Scalar>(head: OutputHead, z: ArrayView2<T>) -> Array2<T> {
    match head {
        OutputHead::Linear => z.to_owned(),
        OutputHead::Softmax => log_softmax(z).mapv(T::exp),
    }
}
