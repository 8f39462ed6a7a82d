use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encode::{min_max, EncodedDataset, FeatureBlock, FeatureLayout};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MIN_SPLIT_ROWS: usize = 10;

/// Train/validation/test partition in 7:1:2 proportions.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset<T> {
    pub train: EncodedDataset<T>,
    pub validation: EncodedDataset<T>,
    pub test: EncodedDataset<T>,
    pub seed: u64,
}

/// Sizes `floor(0.7 n)`, `floor(0.1 n)` and the remainder.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 7 / 10;
    let validation = n / 10;
    (train, validation, n - train - validation)
}

/// Seeded shuffle into train/validation/test. Numeric features are re-scaled
/// with min-max bounds taken from the training part only; validation and test
/// values are clamped into `[0, 1]`.
pub fn split<T: Scalar>(data: &EncodedDataset<T>, seed: u64) -> Result<SplitDataset<T>> {
    let n = data.len();
    if n < MIN_SPLIT_ROWS {
        return Err(Error::TooSmall {
            n,
            min: MIN_SPLIT_ROWS,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_val, _) = split_sizes(n);
    let mut train = data.subset(&order[..n_train]);
    let mut validation = data.subset(&order[n_train..n_train + n_val]);
    let mut test = data.subset(&order[n_train + n_val..]);

    let mut layout = FeatureLayout::clone(&data.layout);
    for block in &mut layout.blocks {
        if let FeatureBlock::Numeric {
            offset, min, max, ..
        } = block
        {
            let col = train.x.column(*offset);
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v.as_f64()), hi.max(v.as_f64()))
            });
            for part in [&mut train, &mut validation, &mut test] {
                part.x
                    .column_mut(*offset)
                    .mapv_inplace(|v| T::of(min_max(v.as_f64(), lo, hi)));
            }
            let span = *max - *min;
            let (raw_lo, raw_hi) = (*min + lo * span, *min + hi * span);
            *min = raw_lo;
            *max = raw_hi;
        }
    }
    let layout = Arc::new(layout);
    for part in [&mut train, &mut validation, &mut test] {
        part.layout = Arc::clone(&layout);
    }
    Ok(SplitDataset {
        train,
        validation,
        test,
        seed,
    })
}

/// Seeded sample of about `fraction * n` rows, stratified on the four
/// `(s, y)` cells. Every nonempty cell keeps at least one row.
pub fn stratified_sample<T: Scalar>(
    data: &EncodedDataset<T>,
    fraction: f64,
    seed: u64,
) -> Result<EncodedDataset<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Parameter(format!(
            "subset fraction must be in (0, 1], got {fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::new();
    for cell in 0..4u8 {
        let (s, y) = (cell >> 1, cell & 1);
        let mut rows: Vec<usize> = (0..data.len())
            .filter(|&i| data.s[i] == s && data.y[i] == y)
            .collect();
        if rows.is_empty() {
            continue;
        }
        rows.shuffle(&mut rng);
        let take = ((rows.len() as f64 * fraction).round() as usize).clamp(1, rows.len());
        picked.extend_from_slice(&rows[..take]);
    }
    picked.sort_unstable();
    Ok(data.subset(&picked))
}
