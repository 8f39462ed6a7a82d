//! Grid search over `theta` and `gamma` on a stratified training subset.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_sample, EncodedDataset};
use crate::error::{Error, Result};
use crate::metrics::FairnessReport;
use crate::nn::Network;
use crate::repair::{repair_network, RepairConfig};
use crate::scalar::Scalar;

pub const MIN_SUBSET: usize = 50;

/// `n` points with log-uniform spacing from `lo` to `hi` (inclusive).
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

/// `n` evenly spaced points from `lo` to `hi` (inclusive).
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub acc: f64,
    pub dp: f64,
    pub eo: f64,
    pub dpr: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            acc: 1.0,
            dp: 1.0,
            eo: 1.0,
            dpr: 1.0,
        }
    }
}

impl ObjectiveWeights {
    /// `acc·(1−Acc) + dp·DP + eo·EO + dpr·(1 − min(DPR, 1/DPR))`. Undefined
    /// metrics and an infinite DPR count as the worst value, 1.
    pub fn score(&self, r: &FairnessReport) -> f64 {
        let folded = r.dpr_value().map_or(0.0, |d| d.folded());
        self.acc * (1.0 - r.acc)
            + self.dp * r.dp.unwrap_or(1.0)
            + self.eo * r.eo.unwrap_or(1.0)
            + self.dpr * (1.0 - folded)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub thetas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub subset_fraction: f64,
    pub weights: ObjectiveWeights,
    /// Master seed; trial `k` uses `seed + k`, the subset uses `seed`.
    pub seed: u64,
    pub parallel: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            thetas: log_grid(1e-4, 1.0, 9),
            gammas: linear_grid(0.5, 1.0, 6),
            subset_fraction: 0.10,
            weights: ObjectiveWeights::default(),
            seed: 0,
            parallel: true,
        }
    }
}

impl GridSpec {
    pub fn with_counts(theta_points: usize, gamma_points: usize) -> Self {
        GridSpec {
            thetas: log_grid(1e-4, 1.0, theta_points),
            gammas: linear_grid(0.5, 1.0, gamma_points),
            ..GridSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() || self.gammas.is_empty() {
            return Err(Error::Parameter("grid must contain at least one point".into()));
        }
        if let Some(t) = self.thetas.iter().find(|t| !(1e-4..=1.0).contains(*t)) {
            return Err(Error::Parameter(format!("theta {t} outside [1e-4, 1]")));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(0.5..=1.0).contains(*g)) {
            return Err(Error::Parameter(format!("gamma {g} outside [0.5, 1]")));
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(Error::Parameter(format!(
                "subset_fraction must be in (0, 1], got {}",
                self.subset_fraction
            )));
        }
        Ok(())
    }

    /// Grid points in `(theta, gamma)` order, theta-major.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.thetas
            .iter()
            .flat_map(|&t| self.gammas.iter().map(move |&g| (t, g)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub theta: f64,
    pub gamma: f64,
    pub score: Option<f64>,
    pub report: Option<FairnessReport>,
    pub biased_samples: Option<usize>,
    pub error: Option<String>,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub best_theta: f64,
    pub best_gamma: f64,
    pub best_score: f64,
    pub subset_size: usize,
    pub trials: Vec<TrialResult>,
}

impl TuningReport {
    /// `theta,gamma,score` rows for plotting the score surface; failed trials
    /// have an empty score.
    pub fn surface_csv(&self) -> String {
        let mut out = String::from("theta,gamma,score\n");
        for t in &self.trials {
            let score = t.score.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", t.theta, t.gamma, score));
        }
        out
    }
}

/// Runs the repair pipeline for every grid point on a stratified subset of
/// `train`, scoring the repaired model on `eval`.
pub fn tune<T: Scalar>(
    net: &Network<T>,
    train: &EncodedDataset<T>,
    eval: &EncodedDataset<T>,
    grid: &GridSpec,
    base: &RepairConfig,
) -> Result<TuningReport> {
    grid.validate()?;
    let subset = stratified_sample(train, grid.subset_fraction, grid.seed)?;
    if subset.len() < MIN_SUBSET {
        return Err(Error::TooSmall {
            n: subset.len(),
            min: MIN_SUBSET,
        });
    }
    let points = grid.points();
    let run = |(k, &(theta, gamma)): (usize, &(f64, f64))| -> TrialResult {
        let start = Instant::now();
        let cfg = RepairConfig {
            theta,
            gamma,
            seed: grid.seed.wrapping_add(k as u64),
            ..base.clone()
        };
        match repair_network(net, &subset, eval, &cfg) {
            Ok(outcome) => TrialResult {
                theta,
                gamma,
                score: Some(grid.weights.score(&outcome.after)),
                biased_samples: Some(outcome.split.biased_sample_ids.len()),
                report: Some(outcome.after),
                error: None,
                wall_time: start.elapsed().as_secs_f64(),
            },
            Err(e) => TrialResult {
                theta,
                gamma,
                score: None,
                report: None,
                biased_samples: None,
                error: Some(e.to_string()),
                wall_time: start.elapsed().as_secs_f64(),
            },
        }
    };
    let trials: Vec<TrialResult> = if grid.parallel {
        points.par_iter().enumerate().map(run).collect()
    } else {
        points.iter().enumerate().map(run).collect()
    };

    let best = trials
        .iter()
        .filter_map(|t| t.score.map(|s| (s, t.theta, t.gamma)))
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.total_cmp(&b.2))
        });
    match best {
        Some((best_score, best_theta, best_gamma)) => Ok(TuningReport {
            best_theta,
            best_gamma,
            best_score,
            subset_size: subset.len(),
            trials,
        }),
        None => Err(Error::Tuning(
            trials
                .iter()
                .map(|t| {
                    format!(
                        "theta={} gamma={}: {}",
                        t.theta,
                        t.gamma,
                        t.error.as_deref().unwrap_or("no score")
                    )
                })
                .collect(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{FairnessThresholds, PredictionSet};

    #[test]
    fn theta_grid_exponents() {
        let g = log_grid(1e-4, 1.0, 9);
        for (k, v) in g.iter().enumerate() {
            let expected = -4.0 + 0.5 * k as f64;
            assert!((v.log10() - expected).abs() < 1e-12, "{k}: {v}");
        }
        assert_eq!(linear_grid(0.5, 1.0, 6), vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
    }

    #[test]
    fn ideal_trial_scores_zero() {
        let y = vec![1, 0, 1, 0];
        let s = vec![0, 0, 1, 1];
        let p = PredictionSet::new(y.clone(), y, s).unwrap();
        let r = FairnessReport::from_predictions(&p, &FairnessThresholds::default());
        assert_eq!(ObjectiveWeights::default().score(&r), 0.0);
    }

    #[test]
    fn dpr_term_is_folded() {
        let make = |y_hat: Vec<u8>| {
            let p = PredictionSet::new(y_hat, vec![1, 0, 1, 0, 1, 0], vec![0, 0, 0, 1, 1, 1]).unwrap();
            FairnessReport::from_predictions(&p, &FairnessThresholds::default())
        };
        // Swapping which group gets more positives inverts DPR; the score is unchanged.
        let a = make(vec![1, 1, 0, 1, 0, 0]);
        let b = make(vec![1, 0, 0, 1, 1, 0]);
        let w = ObjectiveWeights { acc: 0.0, ..Default::default() };
        assert!((w.score(&a) - w.score(&b)).abs() < 1e-12);
    }

    #[test]
    fn grid_bounds() {
        let mut g = GridSpec::default();
        assert_eq!(g.points().len(), 54);
        g.gammas = vec![0.4];
        assert!(g.validate().is_err());
    }
}
