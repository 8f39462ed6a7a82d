//! Comparison fixers: reweighing (pre-processing) and reject-option
//! classification (post-processing).

use serde::{Deserialize, Serialize};

use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::metrics::{demographic_parity, PredictionSet};
use crate::scalar::Scalar;

/// One positive weight per training row, normalised to mean 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleWeights(pub Vec<f64>);

impl SampleWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len().max(1) as f64
    }
}

/// Cell weights `w(s, y) = P(S=s) P(Y=y) / P(S=s, Y=y)` from empirical
/// frequencies (Kamiran & Calders reweighing), assigned per row.
pub fn reweigh<T: Scalar>(data: &EncodedDataset<T>) -> Result<SampleWeights> {
    let counts = data.cell_counts();
    for s in 0..2 {
        for y in 0..2 {
            if counts[s][y] == 0 {
                return Err(Error::DegenerateCell {
                    s: s as u8,
                    y: y as u8,
                });
            }
        }
    }
    let n = data.len() as f64;
    let p_s = |s: usize| (counts[s][0] + counts[s][1]) as f64 / n;
    let p_y = |y: usize| (counts[0][y] + counts[1][y]) as f64 / n;
    let mut cell = [[0.0; 2]; 2];
    for s in 0..2 {
        for y in 0..2 {
            cell[s][y] = p_s(s) * p_y(y) / (counts[s][y] as f64 / n);
        }
    }
    let raw: Vec<f64> = data
        .s
        .iter()
        .zip(&data.y)
        .map(|(&s, &y)| cell[s as usize][y as usize])
        .collect();
    let mean = raw.iter().sum::<f64>() / n;
    Ok(SampleWeights(raw.into_iter().map(|w| w / mean).collect()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocConfig {
    /// Half-width of the critical band `[0.5 - margin, 0.5 + margin]`.
    pub margin: f64,
    /// Group that receives `Ŷ = 1` inside the band; the other group gets 0.
    #[serde(default = "disadvantaged")]
    pub favored: u8,
}

fn disadvantaged() -> u8 {
    1
}

impl RocConfig {
    pub fn new(margin: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&margin) {
            return Err(Error::Parameter(format!(
                "ROC margin must be in [0, 0.5), got {margin}"
            )));
        }
        Ok(RocConfig { margin, favored: 1 })
    }

    /// Same band, favouring group `s` instead of the disadvantaged one.
    pub fn favoring(self, s: u8) -> Self {
        RocConfig {
            favored: u8::from(s != 0),
            ..self
        }
    }
}

/// Reject-option classification. Scores inside the band give the favourable
/// label to the disadvantaged group (`Ŷ = 1` when `S = 1`) and the
/// unfavourable one to the privileged group; scores outside are thresholded
/// at 0.5. A zero margin leaves every prediction untouched. `cfg.favored`
/// flips the direction for labels where `Ŷ = 1` is the unfavourable outcome.
pub fn roc_postprocess(scores: &[f64], s: &[u8], cfg: &RocConfig) -> Result<Vec<u8>> {
    if scores.len() != s.len() {
        return Err(Error::Parameter(format!(
            "{} scores for {} sensitive values",
            scores.len(),
            s.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Parameter(format!("score {bad} outside [0, 1]")));
    }
    Ok(scores
        .iter()
        .zip(s)
        .map(|(&p, &g)| {
            if cfg.margin > 0.0 && (p - 0.5).abs() <= cfg.margin {
                u8::from(g == cfg.favored)
            } else {
                u8::from(p > 0.5)
            }
        })
        .collect())
}

pub const ROC_MARGIN_GRID_STEP: f64 = 0.01;
pub const ROC_MAX_ACCURACY_DROP: f64 = 0.05;

/// Picks the smallest margin on the grid `0, 0.01, …, 0.49` that minimises DP
/// on validation data while losing at most 5 accuracy points against the
/// zero-margin predictions.
pub fn select_roc_margin(scores: &[f64], y: &[u8], s: &[u8]) -> Result<RocConfig> {
    let plain = RocConfig::new(0.0)?;
    let base = PredictionSet::new(roc_postprocess(scores, s, &plain)?, y.to_vec(), s.to_vec())?;
    // Favour whichever group the plain classifier predicts positive less often.
    let stats = base.group_stats();
    let favored = match (stats.positive_rate(0), stats.positive_rate(1)) {
        (Some(r0), Some(r1)) if r0 < r1 => 0,
        _ => 1,
    };
    let floor = base.accuracy() - ROC_MAX_ACCURACY_DROP;
    let mut best = (plain.favoring(favored), demographic_parity(&base)?);
    for k in 1..50 {
        let cfg = RocConfig::new(k as f64 * ROC_MARGIN_GRID_STEP)?.favoring(favored);
        let p = PredictionSet::new(roc_postprocess(scores, s, &cfg)?, y.to_vec(), s.to_vec())?;
        if p.accuracy() + 1e-12 < floor {
            continue;
        }
        let dp = demographic_parity(&p)?;
        if dp < best.1 {
            best = (cfg, dp);
        }
    }
    Ok(best.0)
}
