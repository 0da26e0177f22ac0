//! Measurements of the information lost by binarization, in the real domain
//! and in hyperspace.
//!
//! * `D_B`: direct binarization `x -> eps * sign(x)` with `eps = E|x|`.
//! * `D_Q`: uniform quantization to bin midpoints.
//! * `D_HB`: quantize, hash-table encode into one binary hypervector, decode
//!   every channel back to a bin midpoint.
//! * `D_L` / `D_H`: replacing real weights by a 0/1 mask in a weighted mean,
//!   in the real domain and in hyperspace respectively.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hv::{BitCounter, Hypervector};
use crate::item_memory::{LevelMemory, PositionMemory, QuantRange};
use crate::rng::RngStream;

/// Mean squared error of `x -> E|x| * sign(x)`.
pub fn direct_binarize_distortion(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("direct binarization of an empty sample".into()));
    }
    let n = xs.len() as f64;
    let eps = xs.iter().map(|x| x.abs()).sum::<f64>() / n;
    Ok(xs
        .iter()
        .map(|&x| {
            let b = if x >= 0.0 { eps } else { -eps };
            (x - b) * (x - b)
        })
        .sum::<f64>()
        / n)
}

/// Quantization error split by whether a sample fell inside the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantDistortion {
    /// Mean squared error over samples inside the support (0 if none).
    pub granular: f64,
    /// Mean squared error over all samples, out-of-range ones clamped.
    pub total: f64,
    /// Fraction of samples inside the support.
    pub in_support: f64,
}

pub fn quantization_distortion_parts(xs: &[f64], range: &QuantRange) -> Result<QuantDistortion> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("quantization of an empty sample".into()));
    }
    let (mut inside, mut inside_err, mut all_err) = (0usize, 0.0, 0.0);
    for &x in xs {
        let e = x - range.reconstruct(x)?;
        all_err += e * e;
        if range.contains(x) {
            inside += 1;
            inside_err += e * e;
        }
    }
    Ok(QuantDistortion {
        granular: if inside > 0 { inside_err / inside as f64 } else { 0.0 },
        total: all_err / xs.len() as f64,
        in_support: inside as f64 / xs.len() as f64,
    })
}

/// `D_Q`: mean squared error to the bin midpoint over the samples inside the
/// quantizer support. See [`quantization_distortion_parts`] for the clamped
/// total.
pub fn quantization_distortion(xs: &[f64], range: &QuantRange) -> Result<f64> {
    Ok(quantization_distortion_parts(xs, range)?.granular)
}

/// Hash-table encoding `sign(sum_i P_i ⊙ V_{level(x_i)})`, no rotation.
pub fn hash_encode(xs: &[f64], pos: &PositionMemory, lvl: &LevelMemory, range: &QuantRange) -> Result<Hypervector> {
    check_memories(xs.len(), pos, lvl, range)?;
    let mut counter = BitCounter::new(pos.dim())?;
    for (i, &x) in xs.iter().enumerate() {
        counter.add_bound(pos.get(i), lvl.level(range.quantize(x)?))?;
    }
    Ok(counter.binarize())
}

/// Recovers the 1-based level of every channel from a hash-table encoding.
pub fn hash_decode_levels(encoded: &Hypervector, channels: usize, pos: &PositionMemory, lvl: &LevelMemory) -> Result<Vec<usize>> {
    if channels > pos.len() {
        return Err(Error::InvalidArgument(format!(
            "{channels} channels but only {} positions",
            pos.len()
        )));
    }
    (0..channels)
        .map(|i| lvl.nearest(&encoded.bind(pos.get(i))?))
        .collect()
}

/// Encodes `xs`, binarizes, and decodes each channel to its bin midpoint.
pub fn hd_roundtrip(xs: &[f64], pos: &PositionMemory, lvl: &LevelMemory, range: &QuantRange) -> Result<Vec<f64>> {
    let encoded = hash_encode(xs, pos, lvl, range)?;
    Ok(hash_decode_levels(&encoded, xs.len(), pos, lvl)?
        .into_iter()
        .map(|l| range.midpoint(l))
        .collect())
}

fn check_memories(n: usize, pos: &PositionMemory, lvl: &LevelMemory, range: &QuantRange) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("no channels to encode".into()));
    }
    if n > pos.len() {
        return Err(Error::InvalidArgument(format!("{n} channels but only {} positions", pos.len())));
    }
    if lvl.levels() != range.q {
        return Err(Error::InvalidArgument(format!(
            "level memory has {} levels, quantizer has {}",
            lvl.levels(),
            range.q
        )));
    }
    if pos.dim() != lvl.dim() {
        return Err(Error::DimensionMismatch {
            left: pos.dim(),
            right: lvl.dim(),
        });
    }
    Ok(())
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Which data distributions a run covers. `Both` runs the first half of the
/// trials on Gaussian data and the rest on uniform data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mix {
    Both,
    Gaussian,
    Uniform,
}

impl Mix {
    fn gaussian_trial(self, t: usize, trials: usize) -> bool {
        match self {
            Mix::Gaussian => true,
            Mix::Uniform => false,
            Mix::Both => t < trials.div_ceil(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Config {
    pub trials: usize,
    pub mix: Mix,
    /// Gaussian standard deviation drawn from `U(sigma.0, sigma.1)`.
    pub sigma: (f64, f64),
    /// Uniform half-width `a` drawn from `U(half_width.0, half_width.1)`.
    pub half_width: (f64, f64),
    /// Quantization levels drawn uniformly from the inclusive range.
    pub levels: (usize, usize),
    /// Channel count drawn uniformly from the inclusive range.
    pub channels: (usize, usize),
    pub dim: usize,
}

impl Default for Theorem1Config {
    fn default() -> Self {
        Self {
            trials: 500,
            mix: Mix::Both,
            sigma: (1.0, 3.0),
            half_width: (1.0, 5.0),
            levels: (16, 256),
            channels: (2, 100),
            dim: 10_000,
        }
    }
}

impl Theorem1Config {
    pub fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        check_real_range("sigma", self.sigma)?;
        check_real_range("half_width", self.half_width)?;
        check_int_range("levels", self.levels, 2)?;
        check_int_range("channels", self.channels, 1)?;
        check_dim(self.dim, self.levels.1)
    }
}

/// Distribution of the real-valued bundling weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightDistribution {
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

impl WeightDistribution {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            WeightDistribution::Normal { mean, std } => Normal::new(mean, std).expect("validated").sample(rng),
            WeightDistribution::Uniform { low, high } => rng.gen_range(low..high),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            WeightDistribution::Normal { mean, std } => mean.is_finite() && std.is_finite() && std > 0.0,
            WeightDistribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high && high > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("weight distribution {self:?} cannot produce positive weights")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Config {
    pub trials: usize,
    pub mix: Mix,
    pub gaussian_std: f64,
    pub uniform_half_width: f64,
    pub levels: usize,
    /// Quantizer support is `[-range_half_width, range_half_width]`.
    pub range_half_width: f64,
    pub channels: (usize, usize),
    /// Variable sets per trial.
    pub sets: usize,
    pub dim: usize,
    pub weights: WeightDistribution,
    /// Divide the weighted hypervector sum by the weight total before taking
    /// its sign, mirroring the real-domain weighted mean.
    pub normalize: bool,
}

impl Default for Theorem2Config {
    fn default() -> Self {
        Self {
            trials: 500,
            mix: Mix::Both,
            gaussian_std: 1.0,
            uniform_half_width: 3.0,
            levels: 256,
            range_half_width: 3.0,
            channels: (10, 100),
            sets: 100,
            dim: 10_000,
            weights: WeightDistribution::Normal { mean: 0.0, std: 1.0 },
            normalize: true,
        }
    }
}

impl Theorem2Config {
    pub fn validate(&self) -> Result<()> {
        check_trials(self.trials)?;
        check_real_range("gaussian_std", (self.gaussian_std, self.gaussian_std))?;
        check_real_range("uniform_half_width", (self.uniform_half_width, self.uniform_half_width))?;
        check_real_range("range_half_width", (self.range_half_width, self.range_half_width))?;
        check_int_range("channels", self.channels, 1)?;
        if self.sets == 0 {
            return Err(Error::Config("sets must be at least 1".into()));
        }
        self.weights.validate()?;
        check_dim(self.dim, self.levels)
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    Ok(())
}

fn check_real_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return Err(Error::Config(format!("{name} range ({lo}, {hi}) must be positive and ordered")));
    }
    Ok(())
}

fn check_int_range(name: &str, (lo, hi): (usize, usize), min: usize) -> Result<()> {
    if lo < min || lo > hi {
        return Err(Error::Config(format!("{name} range ({lo}, {hi}) must be ordered and at least {min}")));
    }
    Ok(())
}

fn check_dim(dim: usize, max_levels: usize) -> Result<()> {
    if max_levels < 2 || dim < 2 * (max_levels - 1) {
        return Err(Error::Config(format!(
            "dimension {dim} cannot hold {max_levels} distinct levels"
        )));
    }
    Ok(())
}

/// Mean and spread of one metric across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    /// Sample standard deviation (0 for a single trial).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl MetricSummary {
    pub fn from_values(name: &str, values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            name: name.to_string(),
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub experiment: String,
    pub trials: usize,
    pub seed: u64,
    pub config: serde_json::Value,
    pub metrics: Vec<MetricSummary>,
    /// Data distribution of each trial.
    #[serde(skip)]
    pub distributions: Vec<String>,
}

impl DistortionReport {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.name == name)
    }

    /// One row per metric.
    pub fn summary_tsv(&self) -> String {
        let mut out = String::from("metric\tmean\tstd\tmin\tmax\ttrials\tseed\n");
        for m in &self.metrics {
            out.push_str(&format!(
                "{}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{}\t{}\n",
                m.name, m.mean, m.std, m.min, m.max, self.trials, self.seed
            ));
        }
        out
    }

    /// One row per trial.
    pub fn trials_tsv(&self) -> String {
        let mut out = String::from("trial\tdistribution");
        for m in &self.metrics {
            out.push('\t');
            out.push_str(&m.name);
        }
        out.push('\n');
        for t in 0..self.trials {
            out.push_str(&format!("{t}\t{}", self.distributions[t]));
            for m in &self.metrics {
                out.push_str(&format!("\t{:.6e}", m.values[t]));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-trial outcome of the first experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Trial {
    pub gaussian: bool,
    pub channels: usize,
    pub levels: usize,
    pub d_b: f64,
    pub d_q: QuantDistortion,
    pub d_hb: f64,
    /// Fraction of channels whose decoded level equals the quantized level.
    pub decode_accuracy: f64,
}

pub fn theorem1_trial(cfg: &Theorem1Config, gaussian: bool, stream: RngStream) -> Result<Theorem1Trial> {
    let mut rng = stream.substream(0).rng();
    let levels = rng.gen_range(cfg.levels.0..=cfg.levels.1);
    let channels = rng.gen_range(cfg.channels.0..=cfg.channels.1);
    let (xs, range) = if gaussian {
        let sigma = rng.gen_range(cfg.sigma.0..=cfg.sigma.1);
        let dist = Normal::new(0.0, sigma).expect("positive sigma");
        let xs: Vec<f64> = (0..channels).map(|_| dist.sample(&mut rng)).collect();
        (xs, QuantRange::symmetric(3.0 * sigma, levels)?)
    } else {
        let a = rng.gen_range(cfg.half_width.0..=cfg.half_width.1);
        let dist = Uniform::new_inclusive(-a, a);
        let xs: Vec<f64> = (0..channels).map(|_| dist.sample(&mut rng)).collect();
        (xs, QuantRange::symmetric(a, levels)?)
    };
    let pos = PositionMemory::build(channels, cfg.dim, stream.substream(1))?;
    let lvl = LevelMemory::build(levels, cfg.dim, stream.substream(2))?;
    let encoded = hash_encode(&xs, &pos, &lvl, &range)?;
    let decoded = hash_decode_levels(&encoded, channels, &pos, &lvl)?;
    let mut hits = 0;
    for (&x, &l) in xs.iter().zip(&decoded) {
        hits += (range.quantize(x)? == l) as usize;
    }
    let recon: Vec<f64> = decoded.iter().map(|&l| range.midpoint(l)).collect();
    Ok(Theorem1Trial {
        gaussian,
        channels,
        levels,
        d_b: direct_binarize_distortion(&xs)?,
        d_q: quantization_distortion_parts(&xs, &range)?,
        d_hb: mse(&xs, &recon),
        decode_accuracy: hits as f64 / channels as f64,
    })
}

/// Randomized trials comparing direct binarization, quantization and
/// binarization in hyperspace.
pub fn theorem1_experiment(cfg: &Theorem1Config, root: RngStream) -> Result<DistortionReport> {
    cfg.validate()?;
    let trials: Vec<Theorem1Trial> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| theorem1_trial(cfg, cfg.mix.gaussian_trial(t, cfg.trials), root.substream(t as u64)))
        .collect::<Result<_>>()?;
    let col = |f: &dyn Fn(&Theorem1Trial) -> f64| trials.iter().map(f).collect::<Vec<_>>();
    let metrics = vec![
        MetricSummary::from_values("d_b", col(&|t| t.d_b)),
        MetricSummary::from_values("d_hb", col(&|t| t.d_hb)),
        MetricSummary::from_values("d_q", col(&|t| t.d_q.granular)),
        MetricSummary::from_values("d_q_clamped", col(&|t| t.d_q.total)),
        MetricSummary::from_values("decode_accuracy", col(&|t| t.decode_accuracy)),
        MetricSummary::from_values(
            "ordered",
            col(&|t| (t.d_q.granular < t.d_hb && t.d_hb < t.d_b) as u8 as f64),
        ),
    ];
    Ok(DistortionReport {
        experiment: "theorem1".into(),
        trials: cfg.trials,
        seed: root.seed,
        config: serde_json::to_value(cfg).expect("config serializes"),
        metrics,
        distributions: trials.iter().map(|t| dist_name(t.gaussian)).collect(),
    })
}

fn dist_name(gaussian: bool) -> String {
    if gaussian { "gaussian" } else { "uniform" }.to_string()
}

/// Real-domain weighted mean `X^T w / sum w` and masked mean with
/// `w_q = [w > 0]`. `xs` holds one row per variable set.
pub fn weighted_and_masked_means(xs: &[Vec<f64>], w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if xs.is_empty() || xs.len() != w.len() {
        return Err(Error::InvalidArgument(format!("{} sets but {} weights", xs.len(), w.len())));
    }
    let n = xs[0].len();
    let wsum: f64 = w.iter().sum();
    let selected = w.iter().filter(|&&x| x > 0.0).count();
    if selected == 0 {
        return Err(Error::InvalidArgument("no positive weight; the mask is empty".into()));
    }
    let mut weighted = vec![0.0; n];
    let mut masked = vec![0.0; n];
    for (row, &wl) in xs.iter().zip(w) {
        if row.len() != n {
            return Err(Error::InvalidArgument("ragged variable sets".into()));
        }
        for i in 0..n {
            weighted[i] += wl * row[i];
            if wl > 0.0 {
                masked[i] += row[i];
            }
        }
    }
    for i in 0..n {
        weighted[i] /= wsum;
        masked[i] /= selected as f64;
    }
    Ok((weighted, masked))
}

/// Weighted bundle `sign(sum_l w_l H_l)`, divided by `sum_l w_l` first when
/// `normalize` is set (a weighted mean, whose sign flips with the weight
/// total), and the masked bundle `sign(sum_{w_l > 0} H_l)`.
pub fn weighted_and_masked_bundles(hs: &[Hypervector], w: &[f64], normalize: bool) -> Result<(Hypervector, Hypervector)> {
    if hs.is_empty() || hs.len() != w.len() {
        return Err(Error::InvalidArgument(format!("{} vectors but {} weights", hs.len(), w.len())));
    }
    let dim = hs[0].dim();
    let mut acc = vec![0.0; dim];
    let mut mask = BitCounter::new(dim)?;
    for (h, &wl) in hs.iter().zip(w) {
        if h.dim() != dim {
            return Err(Error::DimensionMismatch { left: dim, right: h.dim() });
        }
        h.for_each_bipolar(|i, s| acc[i] += wl * s as f64);
        if wl > 0.0 {
            mask.add(h)?;
        }
    }
    if mask.added() == 0 {
        return Err(Error::InvalidArgument("no positive weight; the mask is empty".into()));
    }
    let wsum: f64 = w.iter().sum();
    if normalize && wsum != 0.0 {
        for a in &mut acc {
            *a /= wsum;
        }
    }
    Ok((Hypervector::from_signs(&acc)?, mask.binarize()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Trial {
    pub gaussian: bool,
    pub channels: usize,
    pub d_l: f64,
    pub d_h: f64,
    /// Weight vectors redrawn because none was positive.
    pub redraws: usize,
}

pub fn theorem2_trial(cfg: &Theorem2Config, gaussian: bool, stream: RngStream) -> Result<Theorem2Trial> {
    let mut rng = stream.substream(0).rng();
    let channels = rng.gen_range(cfg.channels.0..=cfg.channels.1);
    let xs: Vec<Vec<f64>> = if gaussian {
        let dist = Normal::new(0.0, cfg.gaussian_std).expect("positive std");
        (0..cfg.sets).map(|_| (0..channels).map(|_| dist.sample(&mut rng)).collect()).collect()
    } else {
        let a = cfg.uniform_half_width;
        let dist = Uniform::new_inclusive(-a, a);
        (0..cfg.sets).map(|_| (0..channels).map(|_| dist.sample(&mut rng)).collect()).collect()
    };
    let mut redraws = 0;
    let w = loop {
        let w: Vec<f64> = (0..cfg.sets).map(|_| cfg.weights.sample(&mut rng)).collect();
        if w.iter().any(|&x| x > 0.0) {
            break w;
        }
        redraws += 1;
    };
    let (real_w, real_m) = weighted_and_masked_means(&xs, &w)?;

    let range = QuantRange::symmetric(cfg.range_half_width, cfg.levels)?;
    let pos = PositionMemory::build(channels, cfg.dim, stream.substream(1))?;
    let lvl = LevelMemory::build(cfg.levels, cfg.dim, stream.substream(2))?;
    let hs = xs
        .iter()
        .map(|row| hash_encode(row, &pos, &lvl, &range))
        .collect::<Result<Vec<_>>>()?;
    let (y, y_masked) = weighted_and_masked_bundles(&hs, &w, cfg.normalize)?;
    let decode = |h: &Hypervector| -> Result<Vec<f64>> {
        Ok(hash_decode_levels(h, channels, &pos, &lvl)?
            .into_iter()
            .map(|l| range.midpoint(l))
            .collect())
    };
    Ok(Theorem2Trial {
        gaussian,
        channels,
        d_l: mse(&real_w, &real_m),
        d_h: mse(&decode(&y)?, &decode(&y_masked)?),
        redraws,
    })
}

/// Randomized trials comparing weight binarization in the real domain and in
/// hyperspace.
pub fn theorem2_experiment(cfg: &Theorem2Config, root: RngStream) -> Result<DistortionReport> {
    cfg.validate()?;
    let trials: Vec<Theorem2Trial> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| theorem2_trial(cfg, cfg.mix.gaussian_trial(t, cfg.trials), root.substream(t as u64)))
        .collect::<Result<_>>()?;
    let redraws: usize = trials.iter().map(|t| t.redraws).sum();
    if redraws > 0 {
        log::info!("redrew {redraws} weight vectors with no positive entry");
    }
    Ok(DistortionReport {
        experiment: "theorem2".into(),
        trials: cfg.trials,
        seed: root.seed,
        config: serde_json::to_value(cfg).expect("config serializes"),
        metrics: vec![
            MetricSummary::from_values("d_h", trials.iter().map(|t| t.d_h).collect()),
            MetricSummary::from_values("d_l", trials.iter().map(|t| t.d_l).collect()),
        ],
        distributions: trials.iter().map(|t| dist_name(t.gaussian)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal(n: usize, std: f64, stream: RngStream) -> Vec<f64> {
        let mut rng = stream.rng();
        let d = Normal::new(0.0, std).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn direct_binarization_examples() {
        assert_eq!(direct_binarize_distortion(&[2.5, -2.5]).unwrap(), 0.0);
        assert!(direct_binarize_distortion(&[]).is_err());
        // sign(0) -> +1: eps = 1/2, errors (0 - 0.5)^2 and (1 - 0.5)^2.
        assert_eq!(direct_binarize_distortion(&[0.0, 1.0]).unwrap(), 0.25);
        let closed = 1.0 - 2.0 / std::f64::consts::PI;
        let d = direct_binarize_distortion(&normal(200_000, 1.0, RngStream::new(1, 0))).unwrap();
        assert!((d / closed - 1.0).abs() < 0.02, "{d}");
        let d = direct_binarize_distortion(&normal(200_000, 2.0, RngStream::new(1, 1))).unwrap();
        assert!((d / (4.0 * closed) - 1.0).abs() < 0.02, "{d}");
    }

    #[test]
    fn quantization_examples() {
        let xs = normal(200_000, 1.0, RngStream::new(2, 0));
        let r = QuantRange::symmetric(3.0, 16).unwrap();
        let d = quantization_distortion(&xs, &r).unwrap();
        assert!((d / (3.0 / 256.0) - 1.0).abs() < 0.1, "{d}");
        let parts = quantization_distortion_parts(&xs, &r).unwrap();
        assert!(parts.total >= parts.granular * parts.in_support);
        assert!((parts.in_support - 0.9973).abs() < 0.001);

        let fine = QuantRange::symmetric(3.0, 4096).unwrap();
        assert!(quantization_distortion(&xs, &fine).unwrap() < 1e-4);

        let a = 2.5;
        let mut rng = RngStream::new(2, 1).rng();
        let us: Vec<f64> = (0..200_000).map(|_| rng.gen_range(-a..a)).collect();
        let r = QuantRange::symmetric(a, 64).unwrap();
        let want = (2.0 * a / 64.0f64).powi(2) / 12.0;
        let d = quantization_distortion(&us, &r).unwrap();
        assert!((d / want - 1.0).abs() < 0.05, "{d} vs {want}");
        let parts = quantization_distortion_parts(&us, &r).unwrap();
        assert_eq!(parts.granular, parts.total);
    }

    #[test]
    fn single_channel_roundtrip_is_exact() {
        let pos = PositionMemory::build(1, 2000, RngStream::new(3, 0)).unwrap();
        let lvl = LevelMemory::build(32, 2000, RngStream::new(3, 1)).unwrap();
        let r = QuantRange::symmetric(1.0, 32).unwrap();
        for x in [-1.0, -0.33, 0.0, 0.5, 0.999] {
            assert_eq!(hd_roundtrip(&[x], &pos, &lvl, &r).unwrap(), vec![r.reconstruct(x).unwrap()]);
        }
    }

    #[test]
    fn identical_channels_decode_alike() {
        let pos = PositionMemory::build(2, 2000, RngStream::new(4, 0)).unwrap();
        let lvl = LevelMemory::build(16, 2000, RngStream::new(4, 1)).unwrap();
        let r = QuantRange::symmetric(1.0, 16).unwrap();
        let out = hd_roundtrip(&[0.3, 0.3], &pos, &lvl, &r).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn fifty_channels_decode_near_their_level() {
        let (n, q, dim) = (50, 64, 10_000);
        let r = QuantRange::symmetric(3.0, q).unwrap();
        let (mut exact, mut near, mut total) = (0, 0, 0);
        let (mut hd, mut db) = (0.0, 0.0);
        for seed in 0..10 {
            let pos = PositionMemory::build(n, dim, RngStream::new(seed, 0)).unwrap();
            let lvl = LevelMemory::build(q, dim, RngStream::new(seed, 1)).unwrap();
            let xs = normal(n, 1.0, RngStream::new(seed, 2));
            let enc = hash_encode(&xs, &pos, &lvl, &r).unwrap();
            let levels = hash_decode_levels(&enc, n, &pos, &lvl).unwrap();
            for (i, (&x, &l)) in xs.iter().zip(&levels).enumerate() {
                // Brute-force nearest level as the reference decoder.
                let probe = enc.bind(pos.get(i)).unwrap();
                let dists: Vec<usize> = lvl.entries().iter().map(|e| e.hamming_count(&probe).unwrap()).collect();
                let best = dists.iter().min().unwrap();
                assert_eq!(dists[l - 1], *best);
                assert_eq!(dists.iter().position(|d| d == best).unwrap(), l - 1);
                let off = (r.quantize(x).unwrap() as i64 - l as i64).abs();
                exact += (off == 0) as usize;
                near += (off <= 3) as usize;
                total += 1;
            }
            let recon: Vec<f64> = levels.iter().map(|&l| r.midpoint(l)).collect();
            let quantized: Vec<f64> = xs.iter().map(|&x| r.reconstruct(x).unwrap()).collect();
            hd += mse(&recon, &quantized);
            db += direct_binarize_distortion(&xs).unwrap();
        }
        // Crosstalk from 49 other channels is comparable to the gap between
        // adjacent levels, so off-by-one decodes are common but large
        // errors are rare.
        assert!(exact * 2 > total, "{exact}/{total}");
        assert!(near as f64 >= 0.9 * total as f64, "{near}/{total}");
        assert!(hd < 0.1 * db, "{hd} vs {db}");
    }

    #[test]
    fn roundtrip_rejects_mismatched_memories() {
        let pos = PositionMemory::build(2, 500, RngStream::new(6, 0)).unwrap();
        let lvl = LevelMemory::build(8, 500, RngStream::new(6, 1)).unwrap();
        assert!(hd_roundtrip(&[0.1, 0.2, 0.3], &pos, &lvl, &QuantRange::symmetric(1.0, 8).unwrap()).is_err());
        assert!(hd_roundtrip(&[0.1], &pos, &lvl, &QuantRange::symmetric(1.0, 9).unwrap()).is_err());
        assert!(hd_roundtrip(&[], &pos, &lvl, &QuantRange::symmetric(1.0, 8).unwrap()).is_err());
    }

    #[test]
    fn positive_weights_give_plain_mean() {
        let xs = vec![vec![1.0, 2.0], vec![3.0, -2.0], vec![5.0, 0.0]];
        let (_, masked) = weighted_and_masked_means(&xs, &[0.1, 2.0, 7.0]).unwrap();
        assert_eq!(masked, vec![3.0, 0.0]);
        let (w, m) = weighted_and_masked_means(&xs, &[1.0, -1.0, 1.0]).unwrap();
        assert_eq!(w, vec![3.0, 4.0]);
        assert_eq!(m, vec![3.0, 1.0]);
        assert!(weighted_and_masked_means(&xs, &[-1.0, 0.0, -2.0]).is_err());
    }

    #[test]
    fn masked_bundle_of_positive_weights_is_plain_bundle() {
        let hs: Vec<Hypervector> = (0..5).map(|i| Hypervector::random(&RngStream::new(7, i), 300).unwrap()).collect();
        let (y, ym) = weighted_and_masked_bundles(&hs, &[1.0; 5], true).unwrap();
        assert_eq!(y, ym);
        assert_eq!(ym, crate::hv::bundle(300, &hs).unwrap());
        // A negative weight total flips the plain sum but not the mean.
        let w = [-1.0, -2.0, 0.5, -1.5, -0.25];
        let (mean, _) = weighted_and_masked_bundles(&hs, &w, true).unwrap();
        let (sum, _) = weighted_and_masked_bundles(&hs, &w, false).unwrap();
        let differs = (0..300).filter(|&i| mean.get(i) != sum.get(i)).count();
        let zeros = {
            let mut acc = vec![0.0; 300];
            for (h, wl) in hs.iter().zip(w) {
                h.for_each_bipolar(|i, s| acc[i] += wl * s as f64);
            }
            acc.iter().filter(|&&a| a == 0.0).count()
        };
        assert_eq!(differs, 300 - zeros);
    }

    fn small_t1(trials: usize) -> Theorem1Config {
        Theorem1Config {
            trials,
            dim: 2000,
            levels: (16, 64),
            channels: (2, 20),
            ..Theorem1Config::default()
        }
    }

    #[test]
    fn theorem1_is_reproducible() {
        let a = theorem1_experiment(&small_t1(1), RngStream::new(9, 0)).unwrap();
        let b = theorem1_experiment(&small_t1(1), RngStream::new(9, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.summary_tsv(), b.summary_tsv());
        assert_eq!(a.metrics[0].values, b.metrics[0].values);
    }

    #[test]
    fn theorem1_small_run_orders_means() {
        let r = theorem1_experiment(&small_t1(40), RngStream::new(10, 0)).unwrap();
        let mean = |n: &str| r.metric(n).unwrap().mean;
        assert!(mean("d_q") < mean("d_hb") && mean("d_hb") < mean("d_b"));
        assert_eq!(r.distributions.iter().filter(|d| *d == "gaussian").count(), 20);
        assert!(r.metrics.iter().all(|m| m.mean >= 0.0));
        assert_eq!(r.trials_tsv().lines().count(), 41);
    }

    #[test]
    fn theorem2_small_run() {
        let cfg = Theorem2Config {
            trials: 6,
            sets: 20,
            channels: (5, 10),
            dim: 2000,
            ..Theorem2Config::default()
        };
        let r = theorem2_experiment(&cfg, RngStream::new(11, 0)).unwrap();
        let dh = r.metric("d_h").unwrap();
        // Decoded values live in [-3, 3], so D_H can never exceed 36.
        assert!(dh.max <= 36.0);
        assert!(r.metric("d_l").unwrap().mean >= 0.0);
        let json: serde_json::Value = serde_json::from_str(&r.summary_json()).unwrap();
        assert_eq!(json["trials"], 6);
        assert_eq!(json["config"]["weights"]["kind"], "normal");
    }

    #[test]
    fn configs_are_validated() {
        let mut c = Theorem1Config::default();
        c.trials = 0;
        assert!(theorem1_experiment(&c, RngStream::new(0, 0)).is_err());
        let mut c = Theorem1Config::default();
        c.dim = 100;
        assert!(c.validate().is_err());
        let mut c = Theorem2Config::default();
        c.weights = WeightDistribution::Uniform { low: -2.0, high: 0.0 };
        assert!(c.validate().is_err());
    }
}
