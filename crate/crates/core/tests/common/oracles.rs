//! Independent reference implementations used by the property tests and
//! the acceptance suite.

use std::collections::BTreeSet;

use fairpath::data::EncodedDataset;
use fairpath::metrics::{demographic_parity, demographic_parity_ratio, equal_opportunity, Dpr, PredictionSet};
use fairpath::nn::{Network, OutputHead};
use fairpath::slicing::{get_activation_path, profile_averages, SliceParams};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Edge = (usize, usize, usize);

/// Per-layer values: inputs, ReLU outputs of hidden layers, raw logits.
pub fn values(net: &Network<f64>, x: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![x.to_vec()];
    let last = net.layers().len() - 1;
    for (l, layer) in net.layers().iter().enumerate() {
        let prev = out.last().unwrap();
        let mut next = Vec::new();
        for q in 0..layer.weights.nrows() {
            let mut z = layer.bias[q];
            for (n, p) in prev.iter().enumerate() {
                z += layer.weights[[q, n]] * p;
            }
            next.push(if l == last { z } else { z.max(0.0) });
        }
        out.push(next);
    }
    out
}

/// The selected predecessor set, found by checking every subset against
/// the defining conditions rather than by a greedy scan:
/// - no unselected candidate outranks a selected one (|c| desc, index asc);
/// - the selected set minus its weakest member stays within the bound;
/// - either everything is selected or the selected total exceeds the bound.
pub fn oracle_select(c: &[f64], bound: f64) -> BTreeSet<usize> {
    let outranks = |a: usize, b: usize| c[a].abs() > c[b].abs() || (c[a].abs() == c[b].abs() && a < b);
    let mut found = Vec::new();
    for mask in 1u32..(1 << c.len()) {
        let set: Vec<usize> = (0..c.len()).filter(|i| mask & (1 << i) != 0).collect();
        let closed = (0..c.len())
            .filter(|i| !set.contains(i))
            .all(|o| set.iter().all(|&s| outranks(s, o)));
        if !closed {
            continue;
        }
        let weakest = *set.iter().find(|&&s| set.iter().all(|&t| t == s || outranks(t, s))).unwrap();
        let total: f64 = set.iter().map(|&s| c[s].abs()).sum();
        let without: f64 = total - c[weakest].abs();
        if without <= bound && (set.len() == c.len() || total > bound) {
            found.push(set.into_iter().collect());
        }
    }
    assert_eq!(found.len(), 1, "selection not unique for {c:?} bound {bound}");
    found.pop().unwrap()
}

pub fn expand(
    net: &Network<f64>,
    rel: &[Vec<f64>],
    layer: usize,
    q: usize,
    gamma: f64,
    edges: &mut BTreeSet<Edge>,
) {
    let v = rel[layer + 1][q];
    if v == 0.0 {
        return;
    }
    let w = &net.layers()[layer].weights;
    let c: Vec<f64> = (0..rel[layer].len()).map(|n| rel[layer][n] * w[[q, n]]).collect();
    for n in oracle_select(&c, gamma * v.abs()) {
        edges.insert((layer, n, q));
        if layer > 0 {
            expand(net, rel, layer - 1, n, gamma, edges);
        }
    }
}

pub fn oracle_path(net: &Network<f64>, rows: &[Vec<f64>], i: usize, gamma: f64) -> BTreeSet<Edge> {
    let all: Vec<Vec<Vec<f64>>> = rows.iter().map(|x| values(net, x)).collect();
    let mean: Vec<Vec<f64>> = (0..all[0].len())
        .map(|l| {
            (0..all[0][l].len())
                .map(|k| all.iter().map(|v| v[l][k]).sum::<f64>() / rows.len() as f64)
                .collect()
        })
        .collect();
    let rel: Vec<Vec<f64>> = all[i]
        .iter()
        .zip(&mean)
        .map(|(v, m)| v.iter().zip(m).map(|(a, b)| a - b).collect())
        .collect();
    let logits = &all[i][all[i].len() - 1];
    let seed = match net.head() {
        OutputHead::Linear => 0,
        OutputHead::Softmax => (0..logits.len()).fold(0, |b, k| if logits[k] > logits[b] { k } else { b }),
    };
    let mut edges = BTreeSet::new();
    expand(net, &rel, net.layers().len() - 1, seed, gamma, &mut edges);
    edges
}

const H: f64 = 1e-5;

pub fn loss(net: &Network<f64>, x: &Array2<f64>, y: &[u8], w: Option<&[f64]>) -> f64 {
    net.loss_and_gradients(x.view(), y, w).unwrap().0
}

/// Largest relative error over all parameters of one net/batch. Parameters
/// whose two step sizes disagree sit on a ReLU kink and are skipped.
pub fn max_rel_error(net: &mut Network<f64>, x: &Array2<f64>, y: &[u8], w: Option<&[f64]>) -> (f64, usize) {
    let (_, grads) = net.loss_and_gradients(x.view(), y, w).unwrap();
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for l in 0..net.layers().len() {
        let n_w = net.layers()[l].weights.len();
        let n_b = net.layers()[l].bias.len();
        for k in 0..n_w + n_b {
            let central = |net: &mut Network<f64>, h: f64| {
                let bump = |net: &mut Network<f64>, d: f64| {
                    let layer = &mut net.layers_mut()[l];
                    if k < n_w {
                        let (r, c) = (k / layer.weights.ncols(), k % layer.weights.ncols());
                        layer.weights[[r, c]] += d;
                    } else {
                        layer.bias[k - n_w] += d;
                    }
                };
                bump(net, h);
                let up = loss(net, x, y, w);
                bump(net, -2.0 * h);
                let down = loss(net, x, y, w);
                bump(net, h);
                (up - down) / (2.0 * h)
            };
            let numeric = central(net, H);
            let coarse = central(net, 4.0 * H);
            if (numeric - coarse).abs() > 1e-6 * (1.0 + numeric.abs()) {
                skipped += 1;
                continue;
            }
            let g = &grads.layers[l];
            let analytic = if k < n_w {
                g.weights[[k / g.weights.ncols(), k % g.weights.ncols()]]
            } else {
                g.bias[k - n_w]
            };
            let denom = analytic.abs().max(numeric.abs()).max(1e-5);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    (worst, skipped)
}

pub struct Counted {
    pub dp: Option<f64>,
    pub dpr: Option<Option<f64>>, // None: undefined; Some(None): infinite
    pub eo: Option<f64>,
    pub acc: f64,
}

pub fn count(y_hat: &[u8], y: &[u8], s: &[u8]) -> Counted {
    let mut n = [0usize; 2];
    let mut pos = [0usize; 2];
    let mut lab = [0usize; 2];
    let mut tp = [0usize; 2];
    let mut correct = 0;
    for i in 0..y.len() {
        let g = s[i] as usize;
        n[g] += 1;
        pos[g] += y_hat[i] as usize;
        lab[g] += y[i] as usize;
        tp[g] += (y[i] == 1 && y_hat[i] == 1) as usize;
        correct += (y[i] == y_hat[i]) as usize;
    }
    let both = n[0] > 0 && n[1] > 0;
    let rate = |g: usize| pos[g] as f64 / n[g] as f64;
    let dpr = both.then(|| {
        if pos[0] == 0 {
            (pos[1] == 0).then_some(1.0)
        } else {
            Some(rate(1) / rate(0))
        }
    });
    Counted {
        dp: both.then(|| (rate(0) - rate(1)).abs()),
        dpr,
        eo: (lab[0] > 0 && lab[1] > 0)
            .then(|| (tp[0] as f64 / lab[0] as f64 - tp[1] as f64 / lab[1] as f64).abs()),
        acc: correct as f64 / y.len() as f64,
    }
}

pub fn random_set(rng: &mut ChaCha8Rng) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let n = rng.gen_range(1..60);
    let skew: f64 = rng.gen_range(0.0..1.0);
    let mut v = || (0..n).map(|_| u8::from(rng.gen_bool(skew))).collect::<Vec<u8>>();
    (v(), v(), v())
}


/// Compares library paths with [`oracle_path`] on `cases` random dyadic
/// networks (1-4 hidden layers of 1-4 neurons) for every gamma in
/// {0.5, 0.8, 1.0} and four samples each. Returns (paths checked, mismatches).
pub fn path_oracle_run(seed: u64, cases: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut mismatches = 0;
    for case in 0..cases {
        let depth = rng.gen_range(1..=4);
        let head = if case % 3 == 0 { OutputHead::Linear } else { OutputHead::Softmax };
        let mut sizes: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=4)).collect();
        sizes.push(if head == OutputHead::Linear { 1 } else { 2 });
        let net = super::dyadic_net(&mut rng, &sizes, head);
        let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..sizes[0]).map(|_| super::dyadic(&mut rng)).collect()).collect();
        let x = Array2::from_shape_fn((4, sizes[0]), |(r, c)| rows[r][c]);
        let data = EncodedDataset::from_parts(x, vec![0, 1, 0, 1], vec![0, 0, 1, 1]).unwrap();
        let profile = profile_averages(&net, &data).unwrap();
        for &gamma in &[0.5, 0.8, 1.0] {
            let params = SliceParams::new(gamma).unwrap();
            for i in 0..4 {
                let got = get_activation_path(&net, data.x.row(i), None, &params, &profile).unwrap();
                let got: BTreeSet<Edge> =
                    got.edges.iter().map(|e| (e.layer as usize, e.pre as usize, e.post as usize)).collect();
                if got != oracle_path(&net, &rows, i, gamma) {
                    mismatches += 1;
                }
                checked += 1;
            }
        }
    }
    (checked, mismatches)
}

/// Finite-difference check over `cases` random nets and batches, alternating
/// heads and optional sample weights. Returns (worst relative error,
/// parameters skipped on kinks, parameters checked).
pub fn gradient_check_run(seed: u64, cases: usize) -> (f64, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut skipped = 0;
    let mut total = 0;
    for case in 0..cases {
        let head = if case % 2 == 0 { OutputHead::Softmax } else { OutputHead::Linear };
        let inputs = rng.gen_range(1..=5);
        let mut sizes = vec![inputs];
        sizes.extend((0..3).map(|_| rng.gen_range(2..=6)));
        sizes.push(if head == OutputHead::Softmax { 2 } else { 1 });
        let mut net = super::gaussian_net(&mut rng, &sizes, head);
        let n = rng.gen_range(1..=9);
        let x = Array2::from_shape_fn((n, inputs), |_| rng.gen_range(-1.0..1.0));
        let y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
        let w = (case % 4 >= 2).then_some(weights.as_slice());
        let (err, skip) = max_rel_error(&mut net, &x, &y, w);
        worst = worst.max(err);
        skipped += skip;
        total += net.parameter_count();
    }
    (worst, skipped, total)
}

fn dpr_option(p: &PredictionSet) -> Option<Option<f64>> {
    demographic_parity_ratio(p).ok().map(|d| match d {
        Dpr::Finite(v) => Some(v),
        Dpr::Infinite => None,
    })
}

/// Checks DP/DPR/EO against [`count`] on `sets` random prediction sets,
/// together with permutation and group-swap invariance. Returns the number
/// of sets with any discrepancy.
pub fn metric_oracle_run(seed: u64, sets: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..sets {
        let (y_hat, y, s) = random_set(&mut rng);
        let want = count(&y_hat, &y, &s);
        let mut idx: Vec<usize> = (0..y.len()).collect();
        idx.shuffle(&mut rng);
        let pick = |v: &[u8]| idx.iter().map(|&i| v[i]).collect::<Vec<u8>>();
        let p = PredictionSet::new(y_hat.clone(), y.clone(), s.clone()).unwrap();
        let shuffled = PredictionSet::new(pick(&y_hat), pick(&y), pick(&s)).unwrap();
        let swapped = PredictionSet::new(y_hat, y, s.iter().map(|g| 1 - g).collect()).unwrap();
        let direct = demographic_parity(&p).ok() == want.dp
            && equal_opportunity(&p).ok() == want.eo
            && dpr_option(&p) == want.dpr
            && p.accuracy() == want.acc;
        let permuted = demographic_parity(&shuffled).ok() == want.dp
            && equal_opportunity(&shuffled).ok() == want.eo
            && dpr_option(&shuffled) == want.dpr;
        let folded = |q: &PredictionSet| demographic_parity_ratio(q).ok().map(|d| d.folded());
        let group_swap = demographic_parity(&swapped).ok() == want.dp
            && equal_opportunity(&swapped).ok() == want.eo
            && match (folded(&p), folded(&swapped)) {
                (Some(a), Some(b)) => (a - b).abs() < 1e-12,
                (a, b) => a == b,
            };
        if !(direct && permuted && group_swap) {
            bad += 1;
        }
    }
    bad
}
