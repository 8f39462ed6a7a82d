//! `fairpath` command-line front end.
//!
//! Settings resolve as: built-in defaults, then `--config <file>` (TOML in
//! the shape of `ExperimentConfig`, plus an optional `precision` key), then
//! command-line flags. Artifacts go to `--out`, else `$FAIRPATH_OUT_DIR`,
//! else `./fairpath-out`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use fairpath::baselines::{reweigh, roc_postprocess, select_roc_margin};
use fairpath::data::{load_dataset, split, DatasetSchema, EncodedDataset, SplitDataset};
use fairpath::experiment::{
    emit_table, emit_timing_table, run_experiment, ExperimentConfig, ExperimentReport, Method, TableFormat,
};
use fairpath::metrics::{evaluate, FairnessReport, PredictionSet};
use fairpath::nn::{load_model, save_model, train_with_validation, Network, TrainConfig};
use fairpath::repair::repair_network;
use fairpath::slicing::{slice_dataset, write_path_dump};
use fairpath::tuning::tune;
use fairpath::{Error, Scalar};

const OUT_DIR_ENV: &str = "FAIRPATH_OUT_DIR";
const EXIT_PARTIAL: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "fairpath", version, about = "Path-guided fairness repair for tabular neural classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Data file (CSV or whitespace-delimited, per schema).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Built-in schema (adult, compas, german) or path to a schema TOML.
    #[arg(long)]
    schema: Option<String>,
    /// Master seed; trial i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    precision: Option<Precision>,
}

#[derive(Args, Clone, Default)]
struct RepairArgs {
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the naive model on the training split and save it.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a saved model on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Dump one activation path per training sample as JSON lines.
    Slice {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        repair: RepairArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// Slice, cluster and selectively retrain a saved model.
    Repair {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        repair: RepairArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// Grid-search theta and gamma for a saved model.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run a reference fixer: reweighing (retrains) or roc (needs --model).
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: BaselineMethod,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Multi-trial comparison of several methods on shared splits.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        repair: RepairArgs,
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated methods, e.g. naive,path_repair,roc.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// Tune theta/gamma per trial before repairing.
        #[arg(long)]
        tune: bool,
    },
    /// Render a saved experiment report as a table.
    Report {
        /// experiment.json written by `experiment`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Reweighing,
    Roc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Default, Deserialize)]
struct FileConfig {
    #[serde(flatten)]
    experiment: ExperimentConfig,
    #[serde(default)]
    precision: Option<Precision>,
}

/// Errors that map to the config exit code.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

struct Resolved {
    cfg: ExperimentConfig,
    schema: DatasetSchema,
    precision: Precision,
    out: PathBuf,
}

fn resolve(common: &Common, repair: Option<&RepairArgs>) -> anyhow::Result<Resolved> {
    let file = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            toml::from_str::<FileConfig>(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let mut cfg = file.experiment;
    if let Some(d) = &common.dataset {
        cfg.dataset = d.clone();
    }
    if let Some(s) = &common.schema {
        cfg.schema = s.clone();
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(r) = repair {
        if let Some(t) = r.theta {
            cfg.repair.theta = t;
        }
        if let Some(g) = r.gamma {
            cfg.repair.gamma = g;
        }
    }
    if cfg.dataset.as_os_str().is_empty() {
        return Err(config_err("no dataset given (--dataset or `dataset` in the config file)"));
    }
    if cfg.schema.is_empty() {
        return Err(config_err("no schema given (--schema or `schema` in the config file)"));
    }
    let schema = DatasetSchema::resolve(&cfg.schema).map_err(|e| config_err(e.to_string()))?;
    let out = common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fairpath-out"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(Resolved {
        precision: common.precision.or(file.precision).unwrap_or_default(),
        cfg,
        schema,
        out,
    })
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<V: Serialize>(path: &Path, value: &V) -> anyhow::Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn load_split<T: Scalar>(r: &Resolved) -> anyhow::Result<SplitDataset<T>> {
    let (data, stats): (EncodedDataset<T>, _) = load_dataset(&r.cfg.dataset, &r.schema)?;
    eprintln!(
        "loaded {} of {} rows ({} missing, {} filtered), {} features",
        stats.rows_kept,
        stats.rows_read,
        stats.dropped_missing,
        stats.dropped_filtered,
        data.n_features()
    );
    Ok(split(&data, r.cfg.master_seed)?)
}

fn print_report(label: &str, report: &FairnessReport) {
    let dpr = match report.dpr_value() {
        Some(d) => d.to_string(),
        None => "-".into(),
    };
    let opt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.4}"));
    println!(
        "{label}: acc={:.4} dp={} eo={} dpr={}",
        report.acc,
        opt(report.dp),
        opt(report.eo),
        dpr
    );
}

fn cmd_train<T: Scalar>(r: &Resolved, epochs: Option<usize>) -> anyhow::Result<()> {
    let parts = load_split::<T>(r)?;
    let mut train_cfg = r.cfg.train.clone();
    if let Some(e) = epochs {
        train_cfg.max_epochs = e;
    }
    let mut net = Network::<T>::new(r.cfg.network_config(&r.schema, parts.train.n_features(), r.cfg.master_seed))?;
    let history = train_with_validation(&mut net, &parts.train, Some(&parts.validation), &train_cfg)?;
    let report = evaluate(&net, &parts.test, &r.cfg.thresholds)?;
    save_model(&net, r.out.join("model.json"))?;
    write_json(&r.out.join("train_history.json"), &history)?;
    write_json(&r.out.join("report.json"), &report)?;
    print_report("test", &report);
    Ok(())
}

fn cmd_evaluate<T: Scalar>(r: &Resolved, model: &Path) -> anyhow::Result<()> {
    let parts = load_split::<T>(r)?;
    let net: Network<T> = load_model(model)?;
    let report = evaluate(&net, &parts.test, &r.cfg.thresholds)?;
    write_json(&r.out.join("report.json"), &report)?;
    print_report("test", &report);
    Ok(())
}

fn cmd_slice<T: Scalar>(r: &Resolved, model: &Path) -> anyhow::Result<()> {
    let parts = load_split::<T>(r)?;
    let net: Network<T> = load_model(model)?;
    let paths = slice_dataset(&net, &parts.train, &r.cfg.repair.slice_params())?;
    let path = r.out.join("paths.jsonl");
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_path_dump(&paths, std::io::BufWriter::new(file))?;
    println!("{} paths written to {}", paths.len(), path.display());
    Ok(())
}

fn cmd_repair<T: Scalar>(r: &Resolved, model: &Path) -> anyhow::Result<()> {
    let parts = load_split::<T>(r)?;
    let net: Network<T> = load_model(model)?;
    let cfg = fairpath::repair::RepairConfig {
        seed: r.cfg.master_seed,
        thresholds: r.cfg.thresholds,
        ..r.cfg.repair.clone()
    };
    let outcome = repair_network(&net, &parts.train, &parts.test, &cfg)?;
    save_model(&outcome.network, r.out.join("repaired_model.json"))?;
    write(&r.out.join("sample_split.json"), &outcome.split.to_json()?)?;
    let summary = outcome.summary();
    write_json(&r.out.join("repair.json"), &summary)?;
    print_report("before", &summary.before);
    print_report("after", &summary.after);
    println!(
        "biased {} / ordinary {} samples, {} distinct paths; slicing {:.3}s clustering {:.3}s training {:.3}s",
        summary.biased_samples,
        summary.ordinary_samples,
        summary.distinct_paths,
        summary.timings.slicing,
        summary.timings.clustering,
        summary.timings.training
    );
    Ok(())
}

fn cmd_tune<T: Scalar>(r: &Resolved, model: &Path) -> anyhow::Result<()> {
    let parts = load_split::<T>(r)?;
    let net: Network<T> = load_model(model)?;
    let grid = fairpath::tuning::GridSpec {
        seed: r.cfg.master_seed,
        ..r.cfg.grid.clone()
    };
    let report = tune(&net, &parts.train, &parts.validation, &grid, &r.cfg.repair)?;
    write_json(&r.out.join("tuning.json"), &report)?;
    write(&r.out.join("tuning_surface.csv"), &report.surface_csv())?;
    println!(
        "best theta={} gamma={} score={:.4} (subset of {} rows)",
        report.best_theta, report.best_gamma, report.best_score, report.subset_size
    );
    Ok(())
}

fn cmd_baseline<T: Scalar>(r: &Resolved, method: BaselineMethod, model: Option<&Path>) -> anyhow::Result<()> {
    let parts = load_split::<T>(r)?;
    let report = match method {
        BaselineMethod::Reweighing => {
            let weights = reweigh(&parts.train)?;
            let mut net =
                Network::<T>::new(r.cfg.network_config(&r.schema, parts.train.n_features(), r.cfg.master_seed))?;
            let cfg = TrainConfig {
                per_sample_weights: Some(weights.0),
                ..r.cfg.train.clone()
            };
            train_with_validation(&mut net, &parts.train, Some(&parts.validation), &cfg)?;
            save_model(&net, r.out.join("reweighed_model.json"))?;
            evaluate(&net, &parts.test, &r.cfg.thresholds)?
        }
        BaselineMethod::Roc => {
            let Some(model) = model else {
                return Err(config_err("roc needs --model"));
            };
            let net: Network<T> = load_model(model)?;
            let val = &parts.validation;
            let roc = select_roc_margin(&net.positive_scores(val.x.view())?, &val.y, &val.s)?;
            let test = &parts.test;
            let y_hat = roc_postprocess(&net.positive_scores(test.x.view())?, &test.s, &roc)?;
            println!("roc margin={} favored group={}", roc.margin, roc.favored);
            FairnessReport::from_predictions(
                &PredictionSet::new(y_hat, test.y.clone(), test.s.clone())?,
                &r.cfg.thresholds,
            )
        }
    };
    write_json(&r.out.join("baseline.json"), &report)?;
    print_report("test", &report);
    Ok(())
}

fn cmd_experiment<T: Scalar>(r: &Resolved) -> anyhow::Result<ExperimentReport> {
    let report = run_experiment::<T>(&r.cfg)?;
    write_json(&r.out.join("experiment.json"), &report)?;
    write(&r.out.join("table.csv"), &emit_table(&report.records, TableFormat::Csv))?;
    let text = emit_table(&report.records, TableFormat::Text);
    write(&r.out.join("table.txt"), &text)?;
    print!("{text}");
    let timing = emit_timing_table(&report.records);
    if timing.lines().count() > 2 {
        println!();
        print!("{timing}");
    }
    for rec in &report.records {
        for t in rec.trials.iter().filter(|t| t.error.is_some()) {
            eprintln!("trial {} ({}) failed: {}", t.trial, rec.method.name(), t.error.as_deref().unwrap_or(""));
        }
    }
    Ok(report)
}

fn cmd_report(input: &Path, format: Format) -> anyhow::Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let report: ExperimentReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
    if report.records.is_empty() {
        bail!("{} has no records", input.display());
    }
    match format {
        Format::Text => print!("{}", emit_table(&report.records, TableFormat::Text)),
        Format::Csv => print!("{}", emit_table(&report.records, TableFormat::Csv)),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

macro_rules! with_precision {
    ($r:expr, $f:ident($($arg:expr),*)) => {
        match $r.precision {
            Precision::F32 => $f::<f32>($($arg),*),
            Precision::F64 => $f::<f64>($($arg),*),
        }
    };
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Train { common, epochs } => {
            let r = resolve(&common, None)?;
            with_precision!(r, cmd_train(&r, epochs))?;
        }
        Command::Evaluate { common, model } => {
            let r = resolve(&common, None)?;
            with_precision!(r, cmd_evaluate(&r, &model))?;
        }
        Command::Slice { common, repair, model } => {
            let r = resolve(&common, Some(&repair))?;
            with_precision!(r, cmd_slice(&r, &model))?;
        }
        Command::Repair { common, repair, model } => {
            let r = resolve(&common, Some(&repair))?;
            with_precision!(r, cmd_repair(&r, &model))?;
        }
        Command::Tune { common, model } => {
            let r = resolve(&common, None)?;
            with_precision!(r, cmd_tune(&r, &model))?;
        }
        Command::Baseline { common, method, model } => {
            let r = resolve(&common, None)?;
            with_precision!(r, cmd_baseline(&r, method, model.as_deref()))?;
        }
        Command::Experiment {
            common,
            repair,
            trials,
            methods,
            tune,
        } => {
            let mut r = resolve(&common, Some(&repair))?;
            if let Some(t) = trials {
                r.cfg.trials = t;
            }
            if !methods.is_empty() {
                r.cfg.methods = methods
                    .iter()
                    .map(|m| m.parse::<Method>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| config_err(e.to_string()))?;
            }
            r.cfg.tune |= tune;
            r.cfg.validate().map_err(|e| config_err(e.to_string()))?;
            let report = with_precision!(r, cmd_experiment(&r))?;
            if report.any_failed() {
                return Ok(EXIT_PARTIAL);
            }
        }
        Command::Report { input, format } => cmd_report(&input, format)?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are config errors; exit code 2 means partial failure.
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            // Library errors already embed their source in the message.
            let mut msg = String::new();
            for cause in e.chain() {
                let text = cause.to_string();
                if !msg.contains(&text) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&text);
                }
            }
            eprintln!("error: {msg}");
            let config = e.downcast_ref::<ConfigError>().is_some()
                || matches!(
                    e.downcast_ref::<Error>(),
                    Some(Error::Config(_) | Error::Schema(_) | Error::Parameter(_))
                );
            ExitCode::from(if config { EXIT_CONFIG } else { 1 })
        }
    }
}
