//! Accuracy and group-fairness metrics: demographic parity (DP), demographic
//! parity ratio (DPR) and equal opportunity (EO).
//!
//! `s = 1` marks the disadvantaged group. All rates are empirical frequencies.

use serde::{Deserialize, Serialize};

use crate::data::EncodedDataset;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::scalar::Scalar;

/// Predictions with their labels and sensitive attribute.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictionSet {
    pub y_hat: Vec<u8>,
    pub y: Vec<u8>,
    pub s: Vec<u8>,
}

impl PredictionSet {
    pub fn new(y_hat: Vec<u8>, y: Vec<u8>, s: Vec<u8>) -> Result<Self> {
        if y_hat.len() != y.len() || y.len() != s.len() {
            return Err(Error::Parameter(format!(
                "prediction set lengths differ: {} / {} / {}",
                y_hat.len(),
                y.len(),
                s.len()
            )));
        }
        if y_hat.iter().chain(&y).chain(&s).any(|&v| v > 1) {
            return Err(Error::Parameter("prediction set entries must be 0/1".into()));
        }
        Ok(PredictionSet { y_hat, y, s })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn accuracy(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let hits = self.y_hat.iter().zip(&self.y).filter(|(a, b)| a == b).count();
        hits as f64 / self.len() as f64
    }

    pub fn group_stats(&self) -> GroupStats {
        let mut g = GroupStats::default();
        for ((&p, &y), &s) in self.y_hat.iter().zip(&self.y).zip(&self.s) {
            let (s, y) = (s as usize, y as usize);
            g.cell_counts[s][y] += 1;
            g.predicted_positive[s] += p as usize;
            if y == 1 {
                g.true_positive[s] += p as usize;
            }
        }
        g
    }
}

/// Raw counts per sensitive group. Arrays are indexed by `s`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStats {
    /// `cell_counts[s][y]`.
    pub cell_counts: [[usize; 2]; 2],
    pub predicted_positive: [usize; 2],
    pub true_positive: [usize; 2],
}

impl GroupStats {
    pub fn group_size(&self, s: usize) -> usize {
        self.cell_counts[s][0] + self.cell_counts[s][1]
    }

    pub fn positive_rate(&self, s: usize) -> Option<f64> {
        let n = self.group_size(s);
        (n > 0).then(|| self.predicted_positive[s] as f64 / n as f64)
    }

    pub fn tpr(&self, s: usize) -> Option<f64> {
        let n = self.cell_counts[s][1];
        (n > 0).then(|| self.true_positive[s] as f64 / n as f64)
    }
}

/// Demographic parity ratio, `rate(S=1) / rate(S=0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dpr {
    Finite(f64),
    /// Privileged group never predicted positive while the other group is.
    Infinite,
}

impl Dpr {
    /// `min(dpr, 1/dpr)`, in `[0, 1]`; 0 for the infinite case.
    pub fn folded(self) -> f64 {
        match self {
            Dpr::Infinite => 0.0,
            Dpr::Finite(v) if v == 0.0 => 0.0,
            Dpr::Finite(v) => v.min(1.0 / v),
        }
    }
}

impl std::fmt::Display for Dpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dpr::Finite(v) => write!(f, "{v}"),
            Dpr::Infinite => f.write_str("inf"),
        }
    }
}

fn rates(stats: &GroupStats, metric: &'static str) -> Result<(f64, f64)> {
    match (stats.positive_rate(0), stats.positive_rate(1)) {
        (Some(r0), Some(r1)) => Ok((r0, r1)),
        _ => Err(Error::UndefinedGroup {
            metric,
            reason: format!(
                "empty sensitive group (sizes {} / {})",
                stats.group_size(0),
                stats.group_size(1)
            ),
        }),
    }
}

/// `|P(Ŷ=1 | S=0) − P(Ŷ=1 | S=1)|`.
pub fn demographic_parity(p: &PredictionSet) -> Result<f64> {
    let (r0, r1) = rates(&p.group_stats(), "DP")?;
    Ok((r0 - r1).abs())
}

/// `P(Ŷ=1 | S=1) / P(Ŷ=1 | S=0)`; 0/0 is 1, x/0 is infinite.
pub fn demographic_parity_ratio(p: &PredictionSet) -> Result<Dpr> {
    let (r0, r1) = rates(&p.group_stats(), "DPR")?;
    Ok(dpr_from_rates(r0, r1))
}

fn dpr_from_rates(r0: f64, r1: f64) -> Dpr {
    if r0 == 0.0 {
        if r1 == 0.0 {
            Dpr::Finite(1.0)
        } else {
            Dpr::Infinite
        }
    } else {
        Dpr::Finite(r1 / r0)
    }
}

/// `|TPR(S=0) − TPR(S=1)|`.
pub fn equal_opportunity(p: &PredictionSet) -> Result<f64> {
    let stats = p.group_stats();
    match (stats.tpr(0), stats.tpr(1)) {
        (Some(t0), Some(t1)) => Ok((t0 - t1).abs()),
        _ => Err(Error::UndefinedGroup {
            metric: "EO",
            reason: format!(
                "group without positive labels (positives {} / {})",
                stats.cell_counts[0][1], stats.cell_counts[1][1]
            ),
        }),
    }
}

/// Fairness bars: DP ≤ ε, folded DPR ≥ τ, EO ≤ ν.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessThresholds {
    pub epsilon: f64,
    pub tau: f64,
    pub nu: f64,
}

impl Default for FairnessThresholds {
    fn default() -> Self {
        FairnessThresholds {
            epsilon: 0.1,
            tau: 0.8,
            nu: 0.1,
        }
    }
}

impl FairnessThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.epsilon), ("tau", self.tau), ("nu", self.nu)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parameter(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairnessVerdict {
    pub dp_ok: bool,
    pub dpr_ok: bool,
    pub eo_ok: bool,
}

/// Utility and fairness of one model on one dataset.
///
/// JSON shape: `{acc, dp, dpr, dpr_is_inf, eo, group_stats, verdict, undefined}`.
/// `dpr` is `null` when infinite or undefined; undefined metrics are listed by
/// name in `undefined`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub acc: f64,
    pub dp: Option<f64>,
    pub dpr: Option<f64>,
    pub dpr_is_inf: bool,
    pub eo: Option<f64>,
    pub group_stats: GroupStats,
    pub verdict: FairnessVerdict,
    #[serde(default)]
    pub undefined: Vec<String>,
}

impl FairnessReport {
    pub fn from_predictions(p: &PredictionSet, thresholds: &FairnessThresholds) -> Self {
        let mut undefined = Vec::new();
        let mut note = |e: &Error| {
            if let Error::UndefinedGroup { metric, reason } = e {
                undefined.push(format!("{metric}: {reason}"));
            }
        };
        let dp = demographic_parity(p).map_err(|e| note(&e)).ok();
        let dpr = demographic_parity_ratio(p).map_err(|e| note(&e)).ok();
        let eo = equal_opportunity(p).map_err(|e| note(&e)).ok();
        let verdict = FairnessVerdict {
            dp_ok: dp.is_some_and(|v| v <= thresholds.epsilon),
            dpr_ok: dpr.is_some_and(|v| v.folded() >= thresholds.tau),
            eo_ok: eo.is_some_and(|v| v <= thresholds.nu),
        };
        FairnessReport {
            acc: p.accuracy(),
            dp,
            dpr: match dpr {
                Some(Dpr::Finite(v)) => Some(v),
                _ => None,
            },
            dpr_is_inf: matches!(dpr, Some(Dpr::Infinite)),
            eo,
            group_stats: p.group_stats(),
            verdict,
            undefined,
        }
    }

    pub fn dpr_value(&self) -> Option<Dpr> {
        if self.dpr_is_inf {
            Some(Dpr::Infinite)
        } else {
            self.dpr.map(Dpr::Finite)
        }
    }

    pub fn positive_rate(&self, s: usize) -> Option<f64> {
        self.group_stats.positive_rate(s)
    }

    pub fn tpr(&self, s: usize) -> Option<f64> {
        self.group_stats.tpr(s)
    }
}

pub fn predictions<T: Scalar>(net: &Network<T>, data: &EncodedDataset<T>) -> Result<PredictionSet> {
    let y_hat = net.predict(data.x.view())?;
    PredictionSet::new(y_hat, data.y.clone(), data.s.clone())
}

/// Predicts on `data` and reports accuracy, DP, DPR and EO.
pub fn evaluate<T: Scalar>(
    net: &Network<T>,
    data: &EncodedDataset<T>,
    thresholds: &FairnessThresholds,
) -> Result<FairnessReport> {
    Ok(FairnessReport::from_predictions(&predictions(net, data)?, thresholds))
}
