//! Activation-path slicing.
//!
//! A sample's path is found by tracing contributions backwards from a seed
//! output neuron. For a frontier neuron `q` with relative value `v_q`, each
//! predecessor `n` contributes `rel(n) * w(n -> q)`. Predecessors are taken
//! in order of decreasing `|contribution|` while the running sum of selected
//! magnitudes is `<= gamma * |v_q|`; every taken synapse joins the path and
//! its source joins the next frontier. Relative values are activations minus
//! the profiled per-neuron mean. Hidden and input layers use post-activation
//! values; the output layer uses logits.

use std::collections::BTreeSet;
use std::fmt;

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::nn::{argmax, ForwardTrace, Network, OutputHead};
use crate::scalar::Scalar;

/// Per-neuron mean activation over a reference dataset, one vector per layer
/// (input layer first, output logits last).
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationProfile<T> {
    pub means: Vec<Array1<T>>,
}

impl<T: Scalar> ActivationProfile<T> {
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        ActivationProfile {
            means: layer_sizes.iter().map(|&n| Array1::zeros(n)).collect(),
        }
    }

    fn check(&self, net: &Network<T>) -> Result<()> {
        let sizes = &net.config().layer_sizes;
        let ok = self.means.len() == sizes.len()
            && self.means.iter().zip(sizes).all(|(m, &n)| m.len() == n);
        if !ok {
            return Err(Error::Parameter(
                "activation profile shape does not match the network".into(),
            ));
        }
        Ok(())
    }
}

/// Values the slicer works on: post-activations, with logits for the last layer.
pub fn layer_values<T: Scalar>(trace: &ForwardTrace<T>) -> Vec<Array1<T>> {
    let last = trace.post.len() - 1;
    let mut values: Vec<Array1<T>> = trace.post[..last].to_vec();
    values.push(trace.logits().clone());
    values
}

/// Mean of [`layer_values`] over all rows of `data`, dropout bypassed.
/// Traces are computed in parallel and summed in row order, so the result is
/// deterministic.
pub fn profile_averages<T: Scalar>(
    net: &Network<T>,
    data: &EncodedDataset<T>,
) -> Result<ActivationProfile<T>> {
    if data.is_empty() {
        return Err(Error::Parameter("cannot profile an empty dataset".into()));
    }
    let traces: Vec<Vec<Array1<T>>> = (0..data.len())
        .into_par_iter()
        .map(|i| net.forward_trace(data.x.row(i)).map(|t| layer_values(&t)))
        .collect::<Result<_>>()?;
    let sizes = &net.config().layer_sizes;
    let mut sums: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
    for values in &traces {
        for (sum, layer) in sums.iter_mut().zip(values) {
            for (s, v) in sum.iter_mut().zip(layer) {
                *s += v.as_f64();
            }
        }
    }
    let n = data.len() as f64;
    Ok(ActivationProfile {
        means: sums
            .into_iter()
            .map(|s| s.into_iter().map(|v| T::of(v / n)).collect())
            .collect(),
    })
}

/// Per-neuron `value - profiled mean`.
pub fn relative_activations<T: Scalar>(
    trace: &ForwardTrace<T>,
    profile: &ActivationProfile<T>,
) -> Result<Vec<Array1<T>>> {
    let values = layer_values(trace);
    if values.len() != profile.means.len()
        || values.iter().zip(&profile.means).any(|(v, m)| v.len() != m.len())
    {
        return Err(Error::Parameter("trace and profile shapes differ".into()));
    }
    Ok(values
        .iter()
        .zip(&profile.means)
        .map(|(v, m)| v - m)
        .collect())
}

/// Synapse from neuron `pre` of layer `layer` to neuron `post` of layer
/// `layer + 1`. Layer 0 is the input layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SynapseEdge {
    pub layer: u32,
    pub pre: u32,
    pub post: u32,
}

impl SynapseEdge {
    pub fn new(layer: usize, pre: usize, post: usize) -> Self {
        SynapseEdge {
            layer: layer as u32,
            pre: pre as u32,
            post: post as u32,
        }
    }
}

/// Sorted edge list identifying a path; equal keys mean equal edge sets.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathKey(pub Vec<SynapseEdge>);

impl fmt::Display for PathKey {
    /// `layer:pre>post` triples joined by `;`, in lexicographic order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{}:{}>{}", e.layer, e.pre, e.post)?;
        }
        Ok(())
    }
}

impl std::str::FromStr for PathKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("malformed path key `{s}`"));
        if s.is_empty() {
            return Ok(PathKey::default());
        }
        let mut edges = s
            .split(';')
            .map(|part| {
                let (layer, rest) = part.split_once(':').ok_or_else(bad)?;
                let (pre, post) = rest.split_once('>').ok_or_else(bad)?;
                Ok(SynapseEdge {
                    layer: layer.parse().map_err(|_| bad())?,
                    pre: pre.parse().map_err(|_| bad())?,
                    post: post.parse().map_err(|_| bad())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        edges.sort_unstable();
        edges.dedup();
        Ok(PathKey(edges))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivationPath {
    pub sample_id: usize,
    pub edges: BTreeSet<SynapseEdge>,
}

impl ActivationPath {
    pub fn canonical_key(&self) -> PathKey {
        PathKey(self.edges.iter().copied().collect())
    }
}

/// Which output neuron starts the backward trace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedNeuron {
    /// Arg-max logit (softmax head) or the single output (linear head).
    #[default]
    Predicted,
    /// The neuron of the sample's true label (softmax head only).
    TrueLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceParams {
    /// Contribution coverage threshold in `(0, 1]`.
    pub gamma: f64,
    #[serde(default)]
    pub seed_neuron: SeedNeuron,
}

impl SliceParams {
    pub fn new(gamma: f64) -> Result<Self> {
        let p = SliceParams {
            gamma,
            seed_neuron: SeedNeuron::Predicted,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Parameter(format!(
                "gamma must be in (0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Greedy key-synapse selection for one neuron: indices of the selected
/// predecessors, in selection order. `contributions[n]` is the contribution
/// of predecessor `n`; ties in magnitude go to the lower index.
pub fn select_key_synapses<T: Scalar>(contributions: &[T], target: T, gamma: T) -> Vec<usize> {
    let bound = gamma * target.abs();
    let mut order: Vec<usize> = (0..contributions.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        contributions[b]
            .abs()
            .partial_cmp(&contributions[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut sum = T::zero();
    let mut picked = Vec::new();
    for n in order {
        if sum > bound {
            break;
        }
        sum += contributions[n].abs();
        picked.push(n);
    }
    picked
}

/// Extracts one path from precomputed relative values, starting at output
/// neuron `seed`.
pub fn path_from_relative<T: Scalar>(
    net: &Network<T>,
    relative: &[Array1<T>],
    seed: usize,
    gamma: f64,
    sample_id: usize,
) -> ActivationPath {
    let gamma = T::of(gamma);
    let mut edges = BTreeSet::new();
    let mut frontier: BTreeSet<usize> = BTreeSet::from([seed]);
    let mut contributions = Vec::new();
    for layer in (0..net.layers().len()).rev() {
        let weights = &net.layers()[layer].weights;
        let prev = &relative[layer];
        let mut next = BTreeSet::new();
        for &q in &frontier {
            let v_q = relative[layer + 1][q];
            if v_q == T::zero() {
                continue;
            }
            contributions.clear();
            contributions.extend(prev.iter().zip(weights.row(q)).map(|(&r, &w)| r * w));
            for n in select_key_synapses(&contributions, v_q, gamma) {
                edges.insert(SynapseEdge::new(layer, n, q));
                next.insert(n);
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    ActivationPath { sample_id, edges }
}

fn seed_index<T: Scalar>(
    net: &Network<T>,
    logits: ArrayView1<T>,
    label: Option<u8>,
    seed: SeedNeuron,
) -> usize {
    match (net.head(), seed, label) {
        (OutputHead::Linear, _, _) => 0,
        (OutputHead::Softmax, SeedNeuron::TrueLabel, Some(y)) => y as usize,
        (OutputHead::Softmax, _, _) => argmax(logits),
    }
}

/// Traces one sample and extracts its activation path.
pub fn get_activation_path<T: Scalar>(
    net: &Network<T>,
    x: ArrayView1<T>,
    label: Option<u8>,
    params: &SliceParams,
    profile: &ActivationProfile<T>,
) -> Result<ActivationPath> {
    get_activation_path_for(net, x, label, params, profile, 0)
}

fn get_activation_path_for<T: Scalar>(
    net: &Network<T>,
    x: ArrayView1<T>,
    label: Option<u8>,
    params: &SliceParams,
    profile: &ActivationProfile<T>,
    sample_id: usize,
) -> Result<ActivationPath> {
    params.validate()?;
    profile.check(net)?;
    let trace = net.forward_trace(x)?;
    let relative = relative_activations(&trace, profile)?;
    let seed = seed_index(net, trace.logits().view(), label, params.seed_neuron);
    Ok(path_from_relative(net, &relative, seed, params.gamma, sample_id))
}

/// Paths for every row of `data`, tagged with the row index.
pub fn slice_with_profile<T: Scalar>(
    net: &Network<T>,
    data: &EncodedDataset<T>,
    params: &SliceParams,
    profile: &ActivationProfile<T>,
) -> Result<Vec<ActivationPath>> {
    params.validate()?;
    profile.check(net)?;
    (0..data.len())
        .into_par_iter()
        .map(|i| get_activation_path_for(net, data.x.row(i), Some(data.y[i]), params, profile, i))
        .collect()
}

/// Same as [`slice_with_profile`], on the calling thread only.
pub fn slice_with_profile_sequential<T: Scalar>(
    net: &Network<T>,
    data: &EncodedDataset<T>,
    params: &SliceParams,
    profile: &ActivationProfile<T>,
) -> Result<Vec<ActivationPath>> {
    params.validate()?;
    profile.check(net)?;
    (0..data.len())
        .map(|i| get_activation_path_for(net, data.x.row(i), Some(data.y[i]), params, profile, i))
        .collect()
}

/// Profiles `data` and extracts one path per row.
pub fn slice_dataset<T: Scalar>(
    net: &Network<T>,
    data: &EncodedDataset<T>,
    params: &SliceParams,
) -> Result<Vec<ActivationPath>> {
    params.validate()?;
    let profile = profile_averages(net, data)?;
    slice_with_profile(net, data, params, &profile)
}

/// One JSON-lines record of a path dump.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRecord {
    pub sample_id: usize,
    pub canonical_key: String,
    pub edges: Vec<(u32, u32, u32)>,
}

impl From<&ActivationPath> for PathRecord {
    fn from(p: &ActivationPath) -> Self {
        PathRecord {
            sample_id: p.sample_id,
            canonical_key: p.canonical_key().to_string(),
            edges: p.edges.iter().map(|e| (e.layer, e.pre, e.post)).collect(),
        }
    }
}

impl From<PathRecord> for ActivationPath {
    fn from(r: PathRecord) -> Self {
        ActivationPath {
            sample_id: r.sample_id,
            edges: r
                .edges
                .into_iter()
                .map(|(layer, pre, post)| SynapseEdge { layer, pre, post })
                .collect(),
        }
    }
}

/// Writes one [`PathRecord`] per line.
pub fn write_path_dump<W: std::io::Write>(paths: &[ActivationPath], mut out: W) -> Result<()> {
    for p in paths {
        serde_json::to_writer(&mut out, &PathRecord::from(p))?;
        out.write_all(b"\n")
            .map_err(|e| Error::io("<path dump>", e))?;
    }
    Ok(())
}

pub fn read_path_dump<R: std::io::BufRead>(input: R) -> Result<Vec<ActivationPath>> {
    let mut paths = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<path dump>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PathRecord = serde_json::from_str(&line)?;
        paths.push(rec.into());
    }
    Ok(paths)
}
