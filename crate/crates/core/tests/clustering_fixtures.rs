//! Frequency-threshold clustering on hand-built path tables.

use std::collections::BTreeSet;

use fairpath::clustering::{build_path_table, get_samples_divided, ClusterParams};
use fairpath::slicing::{ActivationPath, SynapseEdge};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Paths with the given frequencies; sample ids are shuffled so members of
/// one path are not contiguous. Returns the paths and, per path, its ids.
fn table_fixture(counts: &[usize], seed: u64) -> (Vec<ActivationPath>, Vec<Vec<usize>>) {
    let total: usize = counts.iter().sum();
    let mut ids: Vec<usize> = (0..total).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut paths = Vec::new();
    let mut members = Vec::new();
    let mut next = ids.into_iter();
    for (k, &c) in counts.iter().enumerate() {
        let mut mine = Vec::new();
        for _ in 0..c {
            let id = next.next().unwrap();
            mine.push(id);
            paths.push(ActivationPath {
                sample_id: id,
                edges: BTreeSet::from([SynapseEdge::new(1, k, 0), SynapseEdge::new(0, 0, k)]),
            });
        }
        mine.sort_unstable();
        members.push(mine);
    }
    (paths, members)
}

fn union(members: &[Vec<usize>], which: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = which.iter().flat_map(|&k| members[k].iter().copied()).collect();
    v.sort_unstable();
    v
}

#[test]
fn forty_samples_four_paths() {
    let (paths, members) = table_fixture(&[25, 10, 3, 2], 1);
    let table = build_path_table(&paths).unwrap();
    assert_eq!(table.max_frequency, 25);
    assert_eq!(table.frequencies(), vec![25, 10, 3, 2]);
    let split = get_samples_divided(&table, &ClusterParams::new(0.3).unwrap()).unwrap();
    assert_eq!(split.threshold, 7.5);
    assert_eq!(split.biased_sample_ids, union(&members, &[2, 3]));
    assert_eq!(split.ordinary_sample_ids, union(&members, &[0, 1]));
    assert_eq!(split.biased_path_keys.len(), 2);
}

#[test]
fn max_frequency_47_small_theta() {
    let counts = [47, 30, 12, 5, 2, 2, 1, 1, 1, 1];
    let (paths, members) = table_fixture(&counts, 2);
    let table = build_path_table(&paths).unwrap();
    let split = get_samples_divided(&table, &ClusterParams::new(0.03).unwrap()).unwrap();
    assert_eq!(split.max_frequency, 47);
    assert!((split.threshold - 1.41).abs() < 1e-12);
    // Exactly the frequency-1 paths are biased.
    assert_eq!(split.biased_sample_ids, union(&members, &[6, 7, 8, 9]));
    assert_eq!(split.biased_path_keys.len(), 4);
}

#[test]
fn uniform_frequencies_stay_ordinary_at_theta_one() {
    let (paths, _) = table_fixture(&[4, 4, 4, 4], 3);
    let table = build_path_table(&paths).unwrap();
    let split = get_samples_divided(&table, &ClusterParams::new(1.0).unwrap()).unwrap();
    assert!(split.biased_sample_ids.is_empty());
    assert_eq!(split.ordinary_sample_ids.len(), 16);
}

#[test]
fn split_json_uses_documented_keys() {
    let (paths, _) = table_fixture(&[5, 1], 4);
    let split = get_samples_divided(&build_path_table(&paths).unwrap(), &ClusterParams::new(0.5).unwrap()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&split.to_json().unwrap()).unwrap();
    for key in ["biased_path_keys", "ordinary_sample_ids", "biased_sample_ids", "theta", "M", "threshold"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

proptest! {
    #[test]
    fn split_is_a_partition_and_monotone(
        counts in prop::collection::vec(1usize..30, 1..12),
        t1 in 1e-4f64..=1.0,
        t2 in 1e-4f64..=1.0,
    ) {
        let (paths, _) = table_fixture(&counts, 9);
        let table = build_path_table(&paths).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = get_samples_divided(&table, &ClusterParams::new(lo).unwrap()).unwrap();
        let b = get_samples_divided(&table, &ClusterParams::new(hi).unwrap()).unwrap();
        let total: usize = counts.iter().sum();
        let mut all: Vec<usize> = a.ordinary_sample_ids.iter().chain(&a.biased_sample_ids).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..total).collect::<Vec<_>>());
        let a_set: BTreeSet<usize> = a.biased_sample_ids.iter().copied().collect();
        let b_set: BTreeSet<usize> = b.biased_sample_ids.iter().copied().collect();
        prop_assert!(a_set.is_subset(&b_set));
        // The most frequent path is never biased.
        let max = *counts.iter().max().unwrap();
        prop_assert!(b.biased_sample_ids.len() <= total - max);
    }
}
