//! Versioned JSON model files.
//!
//! Layout (version 1):
//!
//! ```text
//! {
//!   "format": "fairpath-model",
//!   "version": 1,
//!   "scalar": "f64" | "f32",
//!   "config": { "layer_sizes": [..], "hidden_activation": "relu",
//!               "output_head": "softmax" | "linear", "dropout_rate": r, "seed": s },
//!   "dropout_enabled": bool,
//!   "rng": { "seed": "<64 hex chars>", "stream": u64, "word_pos": "<decimal u128>" },
//!   "layers": [ { "outputs": m, "inputs": n,
//!                 "weights": [row-major m*n numbers], "bias": [m numbers] } ]
//! }
//! ```
//!
//! Numbers are written as shortest round-trip decimals of the `f64` value,
//! so every parameter survives save/load bit-for-bit.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::network::{Dense, Network, NetworkConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MODEL_FORMAT: &str = "fairpath-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    outputs: usize,
    inputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    scalar: String,
    config: NetworkConfig,
    dropout_enabled: bool,
    rng: RngState,
    layers: Vec<LayerDoc>,
}

pub fn to_json_string<T: Scalar>(net: &Network<T>) -> Result<String> {
    let doc = ModelDoc {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        scalar: T::NAME.into(),
        config: net.config.clone(),
        dropout_enabled: net.dropout_enabled,
        rng: RngState {
            seed: net.rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: net.rng.get_stream(),
            word_pos: net.rng.get_word_pos().to_string(),
        },
        layers: net
            .layers
            .iter()
            .map(|l| LayerDoc {
                outputs: l.weights.nrows(),
                inputs: l.weights.ncols(),
                weights: l.weights.iter().map(|v| v.as_f64()).collect(),
                bias: l.bias.iter().map(|v| v.as_f64()).collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn from_json_str<T: Scalar>(text: &str) -> Result<Network<T>> {
    let header: Header = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
    if header.format != MODEL_FORMAT {
        return Err(Error::ModelParse {
            offset: 0,
            message: format!("unexpected format tag `{}`", header.format),
        });
    }
    if header.version != MODEL_VERSION {
        return Err(Error::ModelVersion {
            found: header.version,
            expected: MODEL_VERSION,
        });
    }
    let doc: ModelDoc = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
    if doc.scalar != T::NAME {
        return Err(Error::ModelParse {
            offset: 0,
            message: format!("model stores {} parameters, requested {}", doc.scalar, T::NAME),
        });
    }
    let invalid = |message: String| Error::ModelParse { offset: 0, message };
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (i, l) in doc.layers.into_iter().enumerate() {
        let weights = Array2::from_shape_vec(
            (l.outputs, l.inputs),
            l.weights.into_iter().map(T::of).collect(),
        )
        .map_err(|e| invalid(format!("layer {i} weights: {e}")))?;
        let bias = Array1::from_vec(l.bias.into_iter().map(T::of).collect());
        layers.push(Dense { weights, bias });
    }
    let mut net = Network::from_layers(doc.config, layers)
        .map_err(|e| invalid(e.to_string()))?;
    net.dropout_enabled = doc.dropout_enabled;
    net.rng = restore_rng(&doc.rng).ok_or_else(|| invalid("malformed rng state".into()))?;
    Ok(net)
}

pub fn save_model<T: Scalar>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json_string(net)?).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json_str(&text)
}

fn restore_rng(state: &RngState) -> Option<ChaCha8Rng> {
    if state.seed.len() != 64 {
        return None;
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(state.seed.get(2 * i..2 * i + 2)?, 16).ok()?;
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(state.stream);
    rng.set_word_pos(state.word_pos.parse().ok()?);
    Some(rng)
}

/// Converts serde_json's line/column position into a byte offset.
fn parse_error(text: &str, err: &serde_json::Error) -> Error {
    let (line, column) = (err.line(), err.column());
    let offset = if line == 0 {
        0
    } else {
        text.split_inclusive('\n')
            .take(line - 1)
            .map(str::len)
            .sum::<usize>()
            + column.saturating_sub(1)
    };
    Error::ModelParse {
        offset: offset.min(text.len()),
        message: err.to_string(),
    }
}
