//! End-to-end runs: train, evaluate, sweep dimensions, distortion trials.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{self, KeyValues};
use crate::dataset::{load_dataset, Dataset};
use crate::distortion::{theorem1_experiment, theorem2_experiment, DistortionReport};
use crate::encoder::TokenSequence;
use crate::error::{Error, Result};
use crate::item_memory::QuantRange;
use crate::metrics::MetricsReport;
use crate::model::{build_encoder, model_size_kb, Model};
use crate::rng::RngStream;
use crate::trainer::{fit, EpochLog, TrainConfig};

/// Stream id of the distortion trials under the master seed.
const DISTORTION_STREAM: u64 = 6;

/// Per-feature quantizer ranges from the training split's min and max.
pub fn fit_ranges(train: &Dataset, levels: usize) -> Result<Vec<QuantRange>> {
    (0..train.features())
        .map(|f| QuantRange::fit(train.samples.iter().flat_map(|s| s.values[f].iter().copied()), levels))
        .collect()
}

/// Checks that the training split can be used with `cfg`, returning the
/// class count.
pub fn check_train_split(train: &Dataset, cfg: &TrainConfig) -> Result<usize> {
    cfg.validate()?;
    let classes = train.label_bound();
    if classes < 2 {
        return Err(Error::InvalidInput(format!(
            "{} has a single class; at least 2 are needed",
            train.path.display()
        )));
    }
    train.check_coverage(classes)?;
    if train.length() > cfg.dim {
        return Err(Error::Config(format!(
            "series length {} exceeds dimension {}",
            train.length(),
            cfg.dim
        )));
    }
    Ok(classes)
}

/// Trained model with its training log.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub log: Vec<EpochLog>,
}

pub fn train(train: &Dataset, cfg: &TrainConfig, on_epoch: impl FnMut(&EpochLog)) -> Result<Trained> {
    let classes = check_train_split(train, cfg)?;
    let ranges = fit_ranges(train, cfg.quant_levels)?;
    let encoder = build_encoder(cfg.seed, cfg.dim, ranges.clone())?;
    let data: Vec<(TokenSequence, usize)> = train
        .samples
        .par_iter()
        .map(|s| Ok((encoder.encode_sequence(s)?, s.label)))
        .collect::<Result<_>>()?;
    let fitted = fit(&data, classes, cfg, on_epoch)?;
    let model = Model::new(cfg.seed, train.length(), ranges, fitted.heads, fitted.am)?;
    Ok(Trained { model, log: fitted.log })
}

fn check_eval_split(model: &Model, data: &Dataset) -> Result<()> {
    let h = model.header();
    data.check_shape(h.features, h.length, "eval")?;
    data.check_labels(h.classes, "eval")
}

/// Pure binary inference over a split.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<MetricsReport> {
    check_eval_split(model, data)?;
    let started = Instant::now();
    let preds = model.predict_all(&data.samples)?;
    Ok(MetricsReport::new(
        data.labels(),
        preds.into_iter().map(|p| p.label).collect(),
        model.header().classes,
        model.size_kb(),
        started.elapsed().as_secs_f64(),
    ))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub eval: MetricsReport,
}

/// Loads both splits and the config, validates everything, trains, writes
/// the model file, and evaluates on the eval split.
pub fn run_train(
    train_path: &Path,
    eval_path: &Path,
    config_path: Option<&Path>,
    seed: Option<u64>,
    model_out: Option<&Path>,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let mut cfg = match config_path {
        Some(p) => config::load_train_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let train_set = load_dataset(train_path)?;
    let eval_set = load_dataset(eval_path)?;
    let classes = check_train_split(&train_set, &cfg)?;
    eval_set.check_shape(train_set.features(), train_set.length(), "eval")?;
    eval_set.check_labels(classes, "eval")?;

    let trained = train(&train_set, &cfg, on_epoch)?;
    if let Some(path) = model_out {
        trained.model.save(path)?;
    }
    let eval = evaluate(&trained.model, &eval_set)?;
    Ok(TrainOutcome {
        model: trained.model,
        log: trained.log,
        eval,
    })
}

pub fn run_eval(model_path: &Path, data_path: &Path) -> Result<MetricsReport> {
    let model = Model::load(model_path)?;
    let data = load_dataset(data_path)?;
    evaluate(&model, &data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dim: usize,
    pub accuracy: f64,
    pub size_kb: f64,
    pub wall_seconds: f64,
}

pub const SWEEP_HEADER: &str = "dim\taccuracy\tsize_kb\twall_seconds";

impl SweepRow {
    pub fn to_line(&self) -> String {
        format!("{}\t{:.6}\t{}\t{:.3}", self.dim, self.accuracy, self.size_kb, self.wall_seconds)
    }
}

/// Trains and evaluates once per dimension; everything else in `cfg` is kept.
pub fn sweep(train_set: &Dataset, eval_set: &Dataset, cfg: &TrainConfig, dims: &[usize]) -> Result<Vec<SweepRow>> {
    if dims.is_empty() {
        return Err(Error::Config("no dimensions to sweep".into()));
    }
    let configs: Vec<TrainConfig> = dims
        .iter()
        .map(|&dim| TrainConfig { dim, ..cfg.clone() })
        .collect();
    for c in &configs {
        check_train_split(train_set, c)?;
    }
    let classes = train_set.label_bound();
    eval_set.check_shape(train_set.features(), train_set.length(), "eval")?;
    eval_set.check_labels(classes, "eval")?;

    configs
        .iter()
        .map(|c| {
            let started = Instant::now();
            let trained = train(train_set, c, |_| {})?;
            let eval = evaluate(&trained.model, eval_set)?;
            Ok(SweepRow {
                dim: c.dim,
                accuracy: eval.accuracy,
                size_kb: model_size_kb(c.dim, c.heads, classes)?,
                wall_seconds: started.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

pub fn run_sweep(
    train_path: &Path,
    eval_path: &Path,
    config_path: Option<&Path>,
    seed: Option<u64>,
    dims: &[usize],
) -> Result<Vec<SweepRow>> {
    let mut cfg = match config_path {
        Some(p) => config::load_train_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    sweep(&load_dataset(train_path)?, &load_dataset(eval_path)?, &cfg, dims)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistortionMode {
    Theorem1,
    Theorem2,
}

impl std::str::FromStr for DistortionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem1" => Ok(Self::Theorem1),
            "theorem2" => Ok(Self::Theorem2),
            _ => Err(Error::Config(format!("unknown distortion mode `{s}`"))),
        }
    }
}

pub fn run_distortion(
    mode: DistortionMode,
    config_path: Option<&Path>,
    seed: u64,
    trials: Option<usize>,
) -> Result<DistortionReport> {
    let kv = match config_path {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::empty(),
    };
    let root = RngStream::new(seed, DISTORTION_STREAM);
    match mode {
        DistortionMode::Theorem1 => {
            let mut c = config::theorem1_config(kv)?;
            if let Some(t) = trials {
                c.trials = t;
            }
            theorem1_experiment(&c, root)
        }
        DistortionMode::Theorem2 => {
            let mut c = config::theorem2_config(kv)?;
            if let Some(t) = trials {
                c.trials = t;
            }
            theorem2_experiment(&c, root)
        }
    }
}

/// Writes `summary.tsv`, `trials.tsv` and `summary.json` into `dir`.
pub fn write_distortion_report(report: &DistortionReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [
        ("summary.tsv", report.summary_tsv()),
        ("trials.tsv", report.trials_tsv()),
        ("summary.json", report.summary_json()),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Writes `metrics.tsv`, `confusion.tsv` and `predictions.tsv` into `dir`.
pub fn write_metrics(report: &MetricsReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [
        ("metrics.tsv", report.summary_tsv()),
        ("confusion.tsv", report.confusion_tsv()),
        ("predictions.tsv", report.predictions_tsv()),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn training_log_tsv(log: &[EpochLog]) -> String {
    let mut out = format!("{}\n", EpochLog::HEADER);
    for row in log {
        out.push_str(&row.to_line());
        out.push('\n');
    }
    out
}
