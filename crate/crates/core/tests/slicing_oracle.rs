//! Path extraction against an independent brute-force re-implementation.

mod common;

use fairpath::data::EncodedDataset;
use fairpath::nn::OutputHead;
use fairpath::slicing::{get_activation_path, profile_averages, select_key_synapses, slice_dataset, SliceParams};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn matches_exhaustive_oracle_on_random_networks() {
    let (checked, mismatches) = common::oracles::path_oracle_run(2024, 1200);
    assert!(checked >= 1000 * 3);
    assert_eq!(mismatches, 0, "{mismatches} of {checked} paths differ");
}

#[test]
fn parallel_and_single_sample_slicing_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = common::gaussian_net(&mut rng, &[5, 6, 6, 6, 2], OutputHead::Softmax);
    let x = Array2::from_shape_fn((64, 5), |_| rng.gen_range(0.0..1.0));
    let data = EncodedDataset::from_parts(x, vec![0; 64], (0..64).map(|i| (i % 2) as u8).collect()).unwrap();
    let params = SliceParams::new(0.8).unwrap();
    let all = slice_dataset(&net, &data, &params).unwrap();
    let profile = profile_averages(&net, &data).unwrap();
    for (i, path) in all.iter().enumerate() {
        assert_eq!(path.sample_id, i);
        let one = get_activation_path(&net, data.x.row(i), None, &params, &profile).unwrap();
        assert_eq!(one.edges, path.edges);
    }
}

#[test]
fn larger_gamma_never_shrinks_a_neurons_selection() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v = rng.gen_range(-3.0..3.0);
        let mut prev = 0;
        for g in [0.5, 0.6, 0.7, 0.8, 0.9, 1.0] {
            let picked = select_key_synapses(&c, v, g);
            assert!(picked.len() >= prev);
            assert!(!picked.is_empty());
            prev = picked.len();
        }
    }
}
