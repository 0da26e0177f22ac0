//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Unknown or repeated keys are
//! errors so that typos never fall back to defaults silently.
//!
//! Training keys: `hd_dim`, `d_h` (attention heads), `optimizer`, `lr`, `wd`,
//! `dropout`, `batch`, `epoch`, `seed`, `quant_levels`, `logit_scale`
//! (`auto` or a number), `mask_grad` (`ste` or `detach`).

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::distortion::{Mix, Theorem1Config, Theorem2Config, WeightDistribution};
use crate::error::{Error, Result};
use crate::trainer::{MaskGrad, TrainConfig};

#[derive(Debug, Clone)]
pub struct KeyValues {
    path: PathBuf,
    entries: Vec<Entry>,
}

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
    used: bool,
}

impl KeyValues {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{line}: expected `key = value`", path.display()))
            })?;
            let (key, value) = (key.trim().to_ascii_lowercase(), value.trim().to_string());
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!("{}:{line}: empty key or value", path.display())));
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(Error::Config(format!(
                    "{}:{line}: `{key}` already set on line {}",
                    path.display(),
                    prev.line
                )));
            }
            entries.push(Entry {
                key,
                value,
                line,
                used: false,
            });
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Empty set of keys (every field takes its default).
    pub fn empty() -> Self {
        Self {
            path: PathBuf::from("<defaults>"),
            entries: Vec::new(),
        }
    }

    /// Parses and consumes `key` if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let path = self.path.clone();
        match self.entries.iter_mut().find(|e| e.key == key) {
            None => Ok(None),
            Some(e) => {
                e.used = true;
                e.value.parse().map(Some).map_err(|err| {
                    Error::Config(format!("{}:{}: bad value for `{key}`: {err}", path.display(), e.line))
                })
            }
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Fails on any key not consumed by [`take`](Self::take).
    pub fn finish(self) -> Result<()> {
        match self.entries.iter().find(|e| !e.used) {
            Some(e) => Err(Error::Config(format!("{}:{}: unknown key `{}`", self.path.display(), e.line, e.key))),
            None => Ok(()),
        }
    }
}

pub fn train_config(mut kv: KeyValues) -> Result<TrainConfig> {
    let mut c = TrainConfig::default();
    kv.set("hd_dim", &mut c.dim)?;
    kv.set("d_h", &mut c.heads)?;
    if let Some(opt) = kv.take::<String>("optimizer")? {
        if !matches!(opt.to_ascii_lowercase().as_str(), "adam" | "adamw") {
            return Err(Error::Config(format!("unsupported optimizer `{opt}` (only adam)")));
        }
    }
    kv.set("lr", &mut c.learning_rate)?;
    kv.set("wd", &mut c.weight_decay)?;
    kv.set("dropout", &mut c.dropout)?;
    kv.set("batch", &mut c.batch_size)?;
    kv.set("epoch", &mut c.epochs)?;
    kv.set("seed", &mut c.seed)?;
    kv.set("quant_levels", &mut c.quant_levels)?;
    if let Some(s) = kv.take::<String>("logit_scale")? {
        c.logit_scale = if s.eq_ignore_ascii_case("auto") {
            None
        } else {
            Some(s.parse().map_err(|_| Error::Config(format!("bad logit_scale `{s}`")))?)
        };
    }
    kv.set::<MaskGrad>("mask_grad", &mut c.mask_grad)?;
    kv.finish()?;
    c.validate()?;
    Ok(c)
}

pub fn load_train_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    train_config(KeyValues::load(path)?)
}

/// Renders a config in the format read by [`train_config`].
pub fn train_config_text(c: &TrainConfig) -> String {
    let scale = c.logit_scale.map_or("auto".to_string(), |s| format!("{s:?}"));
    let mask = match c.mask_grad {
        MaskGrad::Ste => "ste",
        MaskGrad::Detach => "detach",
    };
    format!(
        "hd_dim = {}\nd_h = {}\noptimizer = adam\nlr = {:?}\nwd = {:?}\ndropout = {:?}\nbatch = {}\nepoch = {}\nseed = {}\nquant_levels = {}\nlogit_scale = {scale}\nmask_grad = {mask}\n",
        c.dim, c.heads, c.learning_rate, c.weight_decay, c.dropout, c.batch_size, c.epochs, c.seed, c.quant_levels
    )
}

impl FromStr for Mix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "both" => Ok(Mix::Both),
            "gaussian" => Ok(Mix::Gaussian),
            "uniform" => Ok(Mix::Uniform),
            _ => Err(Error::Config(format!("unknown mix `{s}` (both, gaussian, uniform)"))),
        }
    }
}

impl FromStr for WeightDistribution {
    type Err = Error;

    /// `normal:<mean>:<std>` or `uniform:<low>:<high>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::Config(format!("bad weight distribution `{s}`")))
        };
        match parts.first().map(|p| p.to_ascii_lowercase()).as_deref() {
            Some("normal") if parts.len() == 3 => Ok(WeightDistribution::Normal { mean: num(1)?, std: num(2)? }),
            Some("uniform") if parts.len() == 3 => Ok(WeightDistribution::Uniform { low: num(1)?, high: num(2)? }),
            _ => Err(Error::Config(format!(
                "bad weight distribution `{s}` (normal:<mean>:<std> or uniform:<low>:<high>)"
            ))),
        }
    }
}

/// Keys: `trials`, `dim`, `mix`, `sigma_min`, `sigma_max`, `a_min`, `a_max`,
/// `q_min`, `q_max`, `channels_min`, `channels_max`.
pub fn theorem1_config(mut kv: KeyValues) -> Result<Theorem1Config> {
    let mut c = Theorem1Config::default();
    kv.set("trials", &mut c.trials)?;
    kv.set("dim", &mut c.dim)?;
    kv.set("mix", &mut c.mix)?;
    kv.set("sigma_min", &mut c.sigma.0)?;
    kv.set("sigma_max", &mut c.sigma.1)?;
    kv.set("a_min", &mut c.half_width.0)?;
    kv.set("a_max", &mut c.half_width.1)?;
    kv.set("q_min", &mut c.levels.0)?;
    kv.set("q_max", &mut c.levels.1)?;
    kv.set("channels_min", &mut c.channels.0)?;
    kv.set("channels_max", &mut c.channels.1)?;
    kv.finish()?;
    c.validate()?;
    Ok(c)
}

/// Keys: `trials`, `dim`, `mix`, `sigma`, `a`, `quant_levels`, `range`,
/// `channels_min`, `channels_max`, `sets`, `weights`, `normalize`.
pub fn theorem2_config(mut kv: KeyValues) -> Result<Theorem2Config> {
    let mut c = Theorem2Config::default();
    kv.set("trials", &mut c.trials)?;
    kv.set("dim", &mut c.dim)?;
    kv.set("mix", &mut c.mix)?;
    kv.set("sigma", &mut c.gaussian_std)?;
    kv.set("a", &mut c.uniform_half_width)?;
    kv.set("quant_levels", &mut c.levels)?;
    kv.set("range", &mut c.range_half_width)?;
    kv.set("channels_min", &mut c.channels.0)?;
    kv.set("channels_max", &mut c.channels.1)?;
    kv.set("sets", &mut c.sets)?;
    kv.set("weights", &mut c.weights)?;
    kv.set("normalize", &mut c.normalize)?;
    kv.finish()?;
    c.validate()?;
    Ok(c)
}
