//! Multi-trial experiment runner and table rendering.
//!
//! Trial `i` uses seed `master_seed + i` for its split, naive model and every
//! repair. All methods of one run share each trial's split and naive model.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{reweigh, roc_postprocess, select_roc_margin};
use crate::clustering::SampleSplit;
use crate::data::{load_dataset, split, DatasetSchema, EncodedDataset, SplitDataset};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, FairnessReport, FairnessThresholds, PredictionSet};
use crate::nn::{train_with_validation, Network, NetworkConfig, OutputHead, TrainConfig};
use crate::repair::{random_split, retrain, slice_and_divide, RepairConfig, RetrainPlan, StageTimings};
use crate::scalar::Scalar;
use crate::tuning::{tune, GridSpec};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    /// Path slicing + clustering + selective dropout retraining.
    PathRepair,
    Reweighing,
    Roc,
    /// Selective retraining with a random biased set of the same size.
    RandomControl,
    PureDropout,
    PureOrdinary,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Naive,
        Method::PathRepair,
        Method::Reweighing,
        Method::Roc,
        Method::RandomControl,
        Method::PureDropout,
        Method::PureOrdinary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::PathRepair => "path_repair",
            Method::Reweighing => "reweighing",
            Method::Roc => "roc",
            Method::RandomControl => "random_control",
            Method::PureDropout => "pure_dropout",
            Method::PureOrdinary => "pure_ordinary",
        }
    }

    fn needs_split(self) -> bool {
        matches!(self, Method::PathRepair | Method::RandomControl)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    /// Built-in schema name or path to a schema TOML file.
    pub schema: String,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub master_seed: u64,
    /// Hidden units per layer; defaults to the schema's value, else 32.
    pub hidden_width: Option<usize>,
    pub output_head: Option<OutputHead>,
    pub dropout_rate: f64,
    pub train: TrainConfig,
    pub repair: RepairConfig,
    /// Run the θ/γ grid search once per trial before repairing.
    pub tune: bool,
    pub grid: GridSpec,
    pub thresholds: FairnessThresholds,
    pub parallel_trials: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: PathBuf::new(),
            schema: String::new(),
            methods: vec![Method::Naive],
            trials: 10,
            master_seed: 0,
            hidden_width: None,
            output_head: None,
            dropout_rate: NetworkConfig::DEFAULT_DROPOUT,
            train: TrainConfig::default(),
            repair: RepairConfig::default(),
            tune: false,
            grid: GridSpec::default(),
            thresholds: FairnessThresholds::default(),
            parallel_trials: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        self.train.validate().map_err(cfg_err)?;
        self.repair.validate().map_err(cfg_err)?;
        self.thresholds.validate().map_err(cfg_err)?;
        if self.tune {
            self.grid.validate().map_err(cfg_err)?;
        }
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.master_seed.wrapping_add(trial as u64)
    }

    /// Network shape for `inputs` encoded features under `schema`.
    pub fn network_config(&self, schema: &DatasetSchema, inputs: usize, seed: u64) -> NetworkConfig {
        let width = self.hidden_width.or(schema.hidden_width).unwrap_or(32);
        let head = self
            .output_head
            .or(schema.output_head)
            .unwrap_or(OutputHead::Softmax);
        let mut cfg = NetworkConfig::three_hidden(inputs, width, head, seed);
        cfg.dropout_rate = self.dropout_rate;
        cfg
    }
}

/// Outcome of one method in one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub report: Option<FairnessReport>,
    pub error: Option<String>,
    /// Wall-clock seconds for naive training in this trial.
    pub naive_train_seconds: f64,
    /// Stage timings for retraining methods.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub biased_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roc_margin: Option<f64>,
}

impl TrialRecord {
    fn failed(trial: usize, seed: u64, error: String) -> Self {
        TrialRecord {
            trial,
            seed,
            report: None,
            error: Some(error),
            naive_train_seconds: 0.0,
            timings: None,
            theta: None,
            gamma: None,
            biased_samples: None,
            roc_margin: None,
        }
    }
}

/// Mean, sample standard deviation and range over the trials that define a
/// metric.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MetricSummary {
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub acc: Option<MetricSummary>,
    pub dp: Option<MetricSummary>,
    pub eo: Option<MetricSummary>,
    /// Over trials with a finite DPR.
    pub dpr: Option<MetricSummary>,
    pub dpr_inf_trials: usize,
    pub failed_trials: usize,
    /// Mean stage timings over successful retraining trials.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
    pub naive_train_seconds: Option<f64>,
}

impl Aggregate {
    pub fn from_trials(trials: &[TrialRecord]) -> Self {
        let reports: Vec<&FairnessReport> = trials.iter().filter_map(|t| t.report.as_ref()).collect();
        let collect = |f: &dyn Fn(&FairnessReport) -> Option<f64>| -> Vec<f64> {
            reports.iter().filter_map(|r| f(r)).collect()
        };
        let timings: Vec<StageTimings> = trials.iter().filter_map(|t| t.timings).collect();
        let mean_timings = (!timings.is_empty()).then(|| {
            let n = timings.len() as f64;
            let mut m = StageTimings::default();
            for t in &timings {
                m.slicing += t.slicing / n;
                m.clustering += t.clustering / n;
                m.training += t.training / n;
                m.evaluation += t.evaluation / n;
                m.total += t.total / n;
            }
            m
        });
        let ok: Vec<f64> = trials
            .iter()
            .filter(|t| t.error.is_none())
            .map(|t| t.naive_train_seconds)
            .collect();
        Aggregate {
            acc: MetricSummary::from_values(&collect(&|r| Some(r.acc))),
            dp: MetricSummary::from_values(&collect(&|r| r.dp)),
            eo: MetricSummary::from_values(&collect(&|r| r.eo)),
            dpr: MetricSummary::from_values(&collect(&|r| r.dpr)),
            dpr_inf_trials: reports.iter().filter(|r| r.dpr_is_inf).count(),
            failed_trials: trials.iter().filter(|t| t.error.is_some()).count(),
            timings: mean_timings,
            naive_train_seconds: MetricSummary::from_values(&ok).map(|s| s.mean),
        }
    }

    /// DPR mean, or infinity when any trial had an infinite DPR.
    pub fn dpr_mean(&self) -> Option<f64> {
        if self.dpr_inf_trials > 0 {
            Some(f64::INFINITY)
        } else {
            self.dpr.map(|s| s.mean)
        }
    }
}

/// All trials of one method on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub dataset: String,
    pub method: Method,
    pub toolkit_version: String,
    pub trials: Vec<TrialRecord>,
    pub aggregate: Aggregate,
    pub config: ExperimentConfig,
}

impl ReportRecord {
    /// Copy with every wall-clock field zeroed; two runs of the same config
    /// produce identical canonical records.
    pub fn canonical(&self) -> Self {
        let mut r = self.clone();
        for t in &mut r.trials {
            t.naive_train_seconds = 0.0;
            t.timings = t.timings.map(|_| StageTimings::default());
        }
        r.aggregate = Aggregate::from_trials(&r.trials);
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub records: Vec<ReportRecord>,
}

impl ExperimentReport {
    pub fn any_failed(&self) -> bool {
        self.records.iter().any(|r| r.aggregate.failed_trials > 0)
    }

    pub fn record(&self, method: Method) -> Option<&ReportRecord> {
        self.records.iter().find(|r| r.method == method)
    }
}

/// Loads the dataset and runs every configured method for every trial.
pub fn run_experiment<T: Scalar>(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let schema = DatasetSchema::resolve(&cfg.schema).map_err(|e| Error::Config(e.to_string()))?;
    let (data, _) = load_dataset::<T>(&cfg.dataset, &schema)?;
    run_experiment_on(cfg, &schema, &data)
}

/// Same as [`run_experiment`] on an already-encoded dataset.
pub fn run_experiment_on<T: Scalar>(
    cfg: &ExperimentConfig,
    schema: &DatasetSchema,
    data: &EncodedDataset<T>,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut methods = cfg.methods.clone();
    methods.dedup();
    let run = |trial: usize| run_trial(cfg, schema, data, trial, &methods);
    let per_trial: Vec<BTreeMap<Method, TrialRecord>> = if cfg.parallel_trials {
        (0..cfg.trials).into_par_iter().map(run).collect()
    } else {
        (0..cfg.trials).map(run).collect()
    };
    let records = methods
        .iter()
        .map(|&m| {
            let trials: Vec<TrialRecord> = per_trial.iter().map(|t| t[&m].clone()).collect();
            ReportRecord {
                dataset: schema.name.clone(),
                method: m,
                toolkit_version: TOOLKIT_VERSION.into(),
                aggregate: Aggregate::from_trials(&trials),
                trials,
                config: cfg.clone(),
            }
        })
        .collect();
    Ok(ExperimentReport { records })
}

/// Split and naive model shared by every method of one trial.
pub struct TrialContext<T> {
    pub seed: u64,
    pub parts: SplitDataset<T>,
    pub naive: Network<T>,
    pub naive_train_seconds: f64,
}

pub fn prepare_trial<T: Scalar>(
    cfg: &ExperimentConfig,
    schema: &DatasetSchema,
    data: &EncodedDataset<T>,
    trial: usize,
) -> Result<TrialContext<T>> {
    let seed = cfg.trial_seed(trial);
    let parts = split(data, seed)?;
    let mut naive = Network::new(cfg.network_config(schema, data.n_features(), seed))?;
    let start = Instant::now();
    train_with_validation(&mut naive, &parts.train, Some(&parts.validation), &cfg.train)?;
    Ok(TrialContext {
        seed,
        parts,
        naive,
        naive_train_seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_trial<T: Scalar>(
    cfg: &ExperimentConfig,
    schema: &DatasetSchema,
    data: &EncodedDataset<T>,
    trial: usize,
    methods: &[Method],
) -> BTreeMap<Method, TrialRecord> {
    let seed = cfg.trial_seed(trial);
    let ctx = match prepare_trial(cfg, schema, data, trial) {
        Ok(ctx) => ctx,
        Err(e) => {
            return methods
                .iter()
                .map(|&m| (m, TrialRecord::failed(trial, seed, format!("naive training: {e}"))))
                .collect()
        }
    };
    let mut shared: Option<Result<(RepairConfig, SampleSplit, StageTimings)>> = None;
    methods
        .iter()
        .map(|&m| {
            if m.needs_split() && shared.is_none() {
                shared = Some(path_split(cfg, &ctx));
            }
            let record = run_method(cfg, &ctx, m, shared.as_ref()).unwrap_or_else(|e| {
                TrialRecord::failed(trial, seed, format!("{}: {e}", m.name()))
            });
            (m, TrialRecord { trial, ..record })
        })
        .collect()
}

/// Repair settings (tuned if requested) and the path-based split for a trial.
fn path_split<T: Scalar>(
    cfg: &ExperimentConfig,
    ctx: &TrialContext<T>,
) -> Result<(RepairConfig, SampleSplit, StageTimings)> {
    let mut repair = RepairConfig {
        seed: ctx.seed,
        thresholds: cfg.thresholds,
        ..cfg.repair.clone()
    };
    if cfg.tune {
        let grid = GridSpec {
            seed: ctx.seed,
            ..cfg.grid.clone()
        };
        let report = tune(&ctx.naive, &ctx.parts.train, &ctx.parts.validation, &grid, &repair)?;
        repair.theta = report.best_theta;
        repair.gamma = report.best_gamma;
    }
    let (split, _, timings) = slice_and_divide(&ctx.naive, &ctx.parts.train, &repair)?;
    Ok((repair, split, timings))
}

fn run_method<T: Scalar>(
    cfg: &ExperimentConfig,
    ctx: &TrialContext<T>,
    method: Method,
    shared: Option<&Result<(RepairConfig, SampleSplit, StageTimings)>>,
) -> Result<TrialRecord> {
    let test = &ctx.parts.test;
    let mut record = TrialRecord {
        trial: 0,
        seed: ctx.seed,
        report: None,
        error: None,
        naive_train_seconds: ctx.naive_train_seconds,
        timings: None,
        theta: None,
        gamma: None,
        biased_samples: None,
        roc_margin: None,
    };
    let repair_cfg = || RepairConfig {
        seed: ctx.seed,
        thresholds: cfg.thresholds,
        ..cfg.repair.clone()
    };
    let shared = || -> Result<&(RepairConfig, SampleSplit, StageTimings)> {
        match shared {
            Some(Ok(s)) => Ok(s),
            Some(Err(e)) => Err(Error::Stage {
                stage: "slicing",
                source: Box::new(Error::Config(e.to_string())),
            }),
            None => Err(Error::Config("path split was not computed".into())),
        }
    };
    match method {
        Method::Naive => {
            record.report = Some(evaluate(&ctx.naive, test, &cfg.thresholds)?);
        }
        Method::PathRepair | Method::RandomControl => {
            let (repair, path_split, slice_timings) = shared()?;
            let split = if method == Method::PathRepair {
                path_split.clone()
            } else {
                random_split(
                    ctx.parts.train.len(),
                    path_split.biased_sample_ids.len(),
                    repair.theta,
                    ctx.seed ^ 0x5eed_5eed,
                )
            };
            let start = Instant::now();
            let (_, _, after, t) =
                retrain(&ctx.naive, &ctx.parts.train, test, repair, &RetrainPlan::Selective(split.clone()))?;
            let mut timings = StageTimings {
                training: t.training,
                evaluation: t.evaluation,
                ..StageTimings::default()
            };
            timings.total = start.elapsed().as_secs_f64();
            if method == Method::PathRepair {
                timings.slicing = slice_timings.slicing;
                timings.clustering = slice_timings.clustering;
                timings.total += slice_timings.slicing + slice_timings.clustering;
            }
            record.report = Some(after);
            record.timings = Some(timings);
            record.theta = Some(repair.theta);
            record.gamma = Some(repair.gamma);
            record.biased_samples = Some(split.biased_sample_ids.len());
        }
        Method::PureDropout | Method::PureOrdinary => {
            let plan = if method == Method::PureDropout {
                RetrainPlan::PureDropout
            } else {
                RetrainPlan::PureOrdinary
            };
            let (_, _, after, t) = retrain(&ctx.naive, &ctx.parts.train, test, &repair_cfg(), &plan)?;
            record.report = Some(after);
            record.timings = Some(StageTimings {
                total: t.training + t.evaluation,
                ..t
            });
        }
        Method::Reweighing => {
            let weights = reweigh(&ctx.parts.train)?;
            let mut net = Network::new(ctx.naive.config().clone())?;
            let train_cfg = TrainConfig {
                per_sample_weights: Some(weights.0),
                ..cfg.train.clone()
            };
            train_with_validation(&mut net, &ctx.parts.train, Some(&ctx.parts.validation), &train_cfg)?;
            record.report = Some(evaluate(&net, test, &cfg.thresholds)?);
        }
        Method::Roc => {
            let val = &ctx.parts.validation;
            let val_scores = ctx.naive.positive_scores(val.x.view())?;
            let roc = select_roc_margin(&val_scores, &val.y, &val.s)?;
            let scores = ctx.naive.positive_scores(test.x.view())?;
            let y_hat = roc_postprocess(&scores, &test.s, &roc)?;
            let p = PredictionSet::new(y_hat, test.y.clone(), test.s.clone())?;
            record.report = Some(FairnessReport::from_predictions(&p, &cfg.thresholds));
            record.roc_margin = Some(roc.margin);
        }
    }
    Ok(record)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Text,
    Csv,
}

fn fmt3(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_infinite() => "inf".into(),
        Some(v) => format!("{v:.3}"),
        None => "-".into(),
    }
}

fn full(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_infinite() => "inf".into(),
        Some(v) => v.to_string(),
        None => String::new(),
    }
}

pub const CSV_HEADER: [&str; 13] = [
    "dataset",
    "method",
    "trials",
    "failed",
    "acc",
    "acc_std",
    "dp",
    "dp_std",
    "eo",
    "eo_std",
    "dpr",
    "dpr_std",
    "dpr_inf_trials",
];

/// Renders mean metrics per record, one row per record in the given order.
/// Columns follow Acc, DP, EO, DPR; an infinite DPR prints as `inf`.
pub fn emit_table(records: &[ReportRecord], format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut out = CSV_HEADER.join(",");
            out.push('\n');
            for r in records {
                let a = &r.aggregate;
                let row = [
                    r.dataset.clone(),
                    r.method.name().to_string(),
                    r.trials.len().to_string(),
                    a.failed_trials.to_string(),
                    full(a.acc.map(|s| s.mean)),
                    full(a.acc.map(|s| s.std)),
                    full(a.dp.map(|s| s.mean)),
                    full(a.dp.map(|s| s.std)),
                    full(a.eo.map(|s| s.mean)),
                    full(a.eo.map(|s| s.std)),
                    full(a.dpr_mean()),
                    full(a.dpr.map(|s| s.std)),
                    a.dpr_inf_trials.to_string(),
                ];
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out
        }
        TableFormat::Text => {
            let header = ["Dataset", "Method", "Acc", "DP", "EO", "DPR", "Trials"];
            let rows: Vec<[String; 7]> = records
                .iter()
                .map(|r| {
                    let a = &r.aggregate;
                    [
                        r.dataset.clone(),
                        r.method.name().to_string(),
                        fmt3(a.acc.map(|s| s.mean)),
                        fmt3(a.dp.map(|s| s.mean)),
                        fmt3(a.eo.map(|s| s.mean)),
                        fmt3(a.dpr_mean()),
                        format!("{}/{}", r.trials.len() - a.failed_trials, r.trials.len()),
                    ]
                })
                .collect();
            render_aligned(&header, &rows)
        }
    }
}

/// Per-stage seconds for records that carry timings (naive training,
/// slicing, clustering, retraining).
pub fn emit_timing_table(records: &[ReportRecord]) -> String {
    let header = ["Dataset", "Method", "Naive", "Slicing", "Clustering", "Training"];
    let secs = |v: f64| format!("{v:.3}s");
    let rows: Vec<[String; 6]> = records
        .iter()
        .filter_map(|r| {
            let t = r.aggregate.timings?;
            Some([
                r.dataset.clone(),
                r.method.name().to_string(),
                r.aggregate.naive_train_seconds.map_or("-".into(), secs),
                secs(t.slicing),
                secs(t.clustering),
                secs(t.training),
            ])
        })
        .collect();
    render_aligned(&header, &rows)
}

fn render_aligned<const N: usize>(header: &[&str; N], rows: &[[String; N]]) -> String {
    let mut widths = header.map(str::len);
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, header.to_vec());
    let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (N - 1)));
    for row in rows {
        line(&mut out, row.iter().map(String::as_str).collect());
    }
    out
}
