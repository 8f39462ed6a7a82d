#![allow(dead_code)]

use std::path::PathBuf;
pub mod oracles;


use fairpath::nn::{Dense, Network, NetworkConfig, OutputHead};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn data_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Multiples of 1/4 in [-2, 2]: sums and products of a few of these are
/// exact in f64, so independent re-implementations agree bit for bit.
pub fn dyadic(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-8i32..=8) as f64 / 4.0
}

/// Random network with the given layer sizes and dyadic parameters.
pub fn dyadic_net(rng: &mut ChaCha8Rng, sizes: &[usize], head: OutputHead) -> Network<f64> {
    let layers = sizes
        .windows(2)
        .map(|w| Dense {
            weights: Array2::from_shape_fn((w[1], w[0]), |_| dyadic(rng)),
            bias: Array1::from_shape_fn(w[1], |_| dyadic(rng)),
        })
        .collect();
    let cfg = NetworkConfig {
        layer_sizes: sizes.to_vec(),
        output_head: head,
        ..NetworkConfig::three_hidden(sizes[0], 4, head, 0)
    };
    Network::from_layers(cfg, layers).unwrap()
}

pub fn gaussian_net(rng: &mut ChaCha8Rng, sizes: &[usize], head: OutputHead) -> Network<f64> {
    let layers = sizes
        .windows(2)
        .map(|w| Dense {
            weights: Array2::from_shape_fn((w[1], w[0]), |_| rng.gen_range(-1.0..1.0)),
            bias: Array1::from_shape_fn(w[1], |_| rng.gen_range(-0.5..0.5)),
        })
        .collect();
    let cfg = NetworkConfig {
        layer_sizes: sizes.to_vec(),
        output_head: head,
        ..NetworkConfig::three_hidden(sizes[0], 4, head, 0)
    };
    Network::from_layers(cfg, layers).unwrap()
}
