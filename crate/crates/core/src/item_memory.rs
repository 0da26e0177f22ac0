//! Position and level memories, and the uniform scalar quantizer that feeds
//! them.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hv::Hypervector;
use crate::rng::RngStream;

/// One random hypervector per feature index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionMemory {
    entries: Vec<Hypervector>,
    stream: RngStream,
}

impl PositionMemory {
    /// `n` independent random hypervectors drawn in order from `stream`.
    pub fn build(n: usize, dim: usize, stream: RngStream) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "position memory needs at least one entry".into(),
            ));
        }
        let mut rng = stream.rng();
        let entries = (0..n)
            .map(|_| Hypervector::random_with(&mut rng, dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries, stream })
    }

    pub fn from_entries(entries: Vec<Hypervector>, stream: RngStream) -> Result<Self> {
        let dim = entries.first().map(Hypervector::dim).ok_or_else(|| {
            Error::InvalidArgument("position memory needs at least one entry".into())
        })?;
        if let Some(bad) = entries.iter().find(|e| e.dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: bad.dim(),
            });
        }
        Ok(Self { entries, stream })
    }

    pub fn entries(&self) -> &[Hypervector] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> &Hypervector {
        &self.entries[i]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries[0].dim()
    }

    pub fn stream(&self) -> RngStream {
        self.stream
    }
}

/// Correlated value hypervectors `V_1 .. V_q`.
///
/// `V_1` is random; each following level flips a fresh, disjoint batch of
/// `floor(D / (2 (q - 1)))` bit positions of its predecessor. Distances are
/// therefore exactly linear in level separation and the two end levels sit
/// just under half the dimension apart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelMemory {
    entries: Vec<Hypervector>,
    stream: RngStream,
}

impl LevelMemory {
    pub fn build(q: usize, dim: usize, stream: RngStream) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidArgument(format!(
                "level memory needs q >= 2, got {q}"
            )));
        }
        let batch = flip_batch(q, dim)?;
        let mut rng = stream.rng();
        let first = Hypervector::random_with(&mut rng, dim)?;
        let mut order: Vec<usize> = (0..dim).collect();
        order.shuffle(&mut rng);

        let mut entries = Vec::with_capacity(q);
        entries.push(first);
        for step in 0..q - 1 {
            let mut next = entries[step].clone();
            next.flip_many(&order[step * batch..(step + 1) * batch]);
            entries.push(next);
        }
        Ok(Self { entries, stream })
    }

    /// Number of levels `q`.
    pub fn levels(&self) -> usize {
        self.entries.len()
    }

    pub fn dim(&self) -> usize {
        self.entries[0].dim()
    }

    /// Hypervector of 1-based `level`.
    pub fn level(&self, level: usize) -> &Hypervector {
        assert!(
            (1..=self.entries.len()).contains(&level),
            "level {level} outside [1, {}]",
            self.entries.len()
        );
        &self.entries[level - 1]
    }

    pub fn entries(&self) -> &[Hypervector] {
        &self.entries
    }

    pub fn stream(&self) -> RngStream {
        self.stream
    }

    /// Bits flipped between consecutive levels.
    pub fn flips_per_level(&self) -> usize {
        self.entries[0].hamming_count(&self.entries[1]).expect("same dim")
    }

    /// 1-based level whose hypervector is nearest to `query` in Hamming
    /// distance; ties go to the lowest level.
    pub fn nearest(&self, query: &Hypervector) -> Result<usize> {
        let mut best = (usize::MAX, 0);
        for (i, e) in self.entries.iter().enumerate() {
            let d = e.hamming_count(query)?;
            if d < best.0 {
                best = (d, i + 1);
            }
        }
        Ok(best.1)
    }
}

fn flip_batch(q: usize, dim: usize) -> Result<usize> {
    let batch = dim / (2 * (q - 1));
    if batch == 0 {
        return Err(Error::InvalidArgument(format!(
            "dimension {dim} too small for {q} distinct levels (needs at least {})",
            2 * (q - 1)
        )));
    }
    Ok(batch)
}

/// Uniform quantizer over `[min, max]` with `q` equal bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantRange {
    pub min: f64,
    pub max: f64,
    pub q: usize,
}

impl QuantRange {
    pub fn new(min: f64, max: f64, q: usize) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "quantizer bounds must be finite, got [{min}, {max}]"
            )));
        }
        if min > max {
            return Err(Error::InvalidArgument(format!(
                "quantizer min {min} exceeds max {max}"
            )));
        }
        if q < 2 {
            return Err(Error::InvalidArgument(format!(
                "quantizer needs q >= 2, got {q}"
            )));
        }
        if min == max {
            log::warn!("degenerate quantizer range [{min}, {max}]: every value maps to level 1");
        }
        Ok(Self { min, max, q })
    }

    /// Symmetric range `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, q: usize) -> Result<Self> {
        Self::new(-half_width, half_width, q)
    }

    /// Range spanning the finite values of `xs`.
    pub fn fit(xs: impl IntoIterator<Item = f64>, q: usize) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in xs {
            if !x.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite value {x}")));
            }
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if lo > hi {
            return Err(Error::InvalidArgument("cannot fit a range to no values".into()));
        }
        Self::new(lo, hi, q)
    }

    /// Bin width `d = (max - min) / q`.
    pub fn step(&self) -> f64 {
        (self.max - self.min) / self.q as f64
    }

    pub fn is_degenerate(&self) -> bool {
        self.min == self.max
    }

    /// Whether `x` lies inside the quantizer support (no clamping needed).
    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    /// 1-based bin of `x`; values outside the range clamp to the end bins and
    /// `max` itself falls in bin `q`.
    pub fn quantize(&self, x: f64) -> Result<usize> {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!("cannot quantize {x}")));
        }
        if self.is_degenerate() {
            return Ok(1);
        }
        let pos = ((x - self.min) / (self.max - self.min) * self.q as f64).floor();
        Ok((pos.max(0.0) as usize + 1).min(self.q))
    }

    /// Midpoint of 1-based bin `level`.
    pub fn midpoint(&self, level: usize) -> f64 {
        debug_assert!((1..=self.q).contains(&level));
        self.min + (level as f64 - 0.5) * self.step()
    }

    /// Quantize then reconstruct at the bin midpoint.
    pub fn reconstruct(&self, x: f64) -> Result<f64> {
        Ok(self.midpoint(self.quantize(x)?))
    }
}
