//! Deployed binary model and its file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "BHDT"  version:u32
//! dim:u32 heads:u32 length:u32 features:u32 levels:u32 classes:u32 seed:u64
//! features x (min:f64, max:f64)
//! BV_q, BV_k, BV_v, BV_a   each ceil(dim/64) u64 words, head slices concatenated
//! classes x ceil(dim/64) u64 words of prototypes
//! ```
//!
//! Item memories are not stored; they are rebuilt from the seed.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::attention::{forward_last, head_dim, HeadParams};
use crate::classifier::{AssociativeMemory, Prediction};
use crate::encoder::{Encoder, SampleBatch, TokenSequence};
use crate::error::{Error, Result};
use crate::hv::Hypervector;
use crate::item_memory::{LevelMemory, PositionMemory, QuantRange};
use crate::rng::RngStream;
use crate::trainer::streams;

pub const MAGIC: &[u8; 4] = b"BHDT";
pub const VERSION: u32 = 1;

/// Size in kB (1000 bytes) of the trained binary parameters: four binding
/// vectors of `dim` bits plus `classes` prototypes.
pub fn model_size_kb(dim: usize, heads: usize, classes: usize) -> Result<f64> {
    head_dim(dim, heads)?;
    Ok((4 * dim + classes * dim) as f64 / 8000.0)
}

/// Shape and seed of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelHeader {
    pub dim: usize,
    pub heads: usize,
    /// Series length `L` the model was trained on.
    pub length: usize,
    pub features: usize,
    pub levels: usize,
    pub classes: usize,
    pub seed: u64,
}

/// Position and level memories regenerated from a master seed.
pub fn build_encoder(seed: u64, dim: usize, ranges: Vec<QuantRange>) -> Result<Encoder> {
    let q = ranges
        .first()
        .ok_or_else(|| Error::InvalidArgument("no feature ranges".into()))?
        .q;
    let positions = PositionMemory::build(ranges.len(), dim, RngStream::new(seed, streams::POSITION))?;
    let levels = LevelMemory::build(q, dim, RngStream::new(seed, streams::LEVEL))?;
    Encoder::new(positions, levels, ranges)
}

#[derive(Debug, Clone)]
pub struct Model {
    header: ModelHeader,
    encoder: Encoder,
    heads: Vec<HeadParams>,
    am: AssociativeMemory,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.header == other.header
            && self.encoder.ranges == other.encoder.ranges
            && self.heads == other.heads
            && self.am == other.am
    }
}

impl Model {
    pub fn new(
        seed: u64,
        length: usize,
        ranges: Vec<QuantRange>,
        heads: Vec<HeadParams>,
        am: AssociativeMemory,
    ) -> Result<Self> {
        let dim = am.dim();
        let dh = head_dim(dim, heads.len().max(1))?;
        if heads.is_empty() || heads.iter().any(|h| h.dim() != dh) {
            return Err(Error::Shape(format!("heads do not tile dimension {dim}")));
        }
        if length == 0 || length > dim {
            return Err(Error::Config(format!("series length {length} must be in [1, {dim}]")));
        }
        let q = ranges.first().map_or(0, |r| r.q);
        if ranges.iter().any(|r| r.q != q) {
            return Err(Error::Config("feature ranges disagree on the level count".into()));
        }
        let header = ModelHeader {
            dim,
            heads: heads.len(),
            length,
            features: ranges.len(),
            levels: q,
            classes: am.classes(),
            seed,
        };
        Ok(Self {
            header,
            encoder: build_encoder(seed, dim, ranges)?,
            heads,
            am,
        })
    }

    pub fn header(&self) -> &ModelHeader {
        &self.header
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn heads(&self) -> &[HeadParams] {
        &self.heads
    }

    pub fn associative_memory(&self) -> &AssociativeMemory {
        &self.am
    }

    pub fn size_kb(&self) -> f64 {
        model_size_kb(self.header.dim, self.header.heads, self.header.classes).expect("validated")
    }

    fn check_sample(&self, s: &SampleBatch) -> Result<()> {
        if s.features() != self.header.features || s.len() != self.header.length {
            return Err(Error::Shape(format!(
                "sample has (N, L) = ({}, {}), model expects ({}, {})",
                s.features(),
                s.len(),
                self.header.features,
                self.header.length
            )));
        }
        Ok(())
    }

    pub fn encode(&self, sample: &SampleBatch) -> Result<TokenSequence> {
        self.check_sample(sample)?;
        self.encoder.encode_sequence(sample)
    }

    /// Binary inference: encode, attend, nearest prototype.
    pub fn predict(&self, sample: &SampleBatch) -> Result<Prediction> {
        let tokens = self.encode(sample)?;
        self.am.infer(&forward_last(&tokens, &self.heads)?)
    }

    pub fn predict_all(&self, samples: &[SampleBatch]) -> Result<Vec<Prediction>> {
        samples.par_iter().map(|s| self.predict(s)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [VERSION as usize, h.dim, h.heads, h.length, h.features, h.levels, h.classes] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&h.seed.to_le_bytes());
        for r in &self.encoder.ranges {
            out.extend_from_slice(&r.min.to_le_bytes());
            out.extend_from_slice(&r.max.to_le_bytes());
        }
        let pick: [fn(&HeadParams) -> &Hypervector; 4] = [|h| &h.bv_q, |h| &h.bv_k, |h| &h.bv_v, |h| &h.bv_a];
        for f in pick {
            let parts: Vec<Hypervector> = self.heads.iter().map(|h| f(h).clone()).collect();
            let full = Hypervector::concat(&parts).expect("heads share a dimension");
            push_words(&mut out, full.words());
        }
        for p in self.am.prototypes() {
            push_words(&mut out, p.words());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::ModelFormat("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let [dim, heads, length, features, levels, classes] = dims;
        let seed = r.u64()?;
        if dim == 0 || heads == 0 || features == 0 || classes < 2 || levels < 2 {
            return Err(Error::ModelFormat(format!("invalid header {dims:?}")));
        }
        let dh = head_dim(dim, heads).map_err(|e| Error::ModelFormat(e.to_string()))?;
        let expected = 4 + 7 * 4 + 8 + features * 16 + (4 + classes) * dim.div_ceil(64) * 8;
        if bytes.len() != expected {
            return Err(Error::ModelFormat(format!(
                "file is {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let ranges = (0..features)
            .map(|_| {
                let (min, max) = (r.f64()?, r.f64()?);
                QuantRange::new(min, max, levels).map_err(|e| Error::ModelFormat(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut bv = Vec::with_capacity(4);
        for _ in 0..4 {
            bv.push(r.hypervector(dim)?);
        }
        let heads = (0..heads)
            .map(|h| {
                let s = |v: &Hypervector| v.slice(h * dh, dh);
                HeadParams::new(s(&bv[0]), s(&bv[1]), s(&bv[2]), s(&bv[3]))
            })
            .collect::<Result<Vec<_>>>()?;
        let protos = (0..classes)
            .map(|_| r.hypervector(dim))
            .collect::<Result<Vec<_>>>()?;
        Self::new(seed, length, ranges, heads, AssociativeMemory::new(protos)?)
            .map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn push_words(out: &mut Vec<u8>, words: &[u64]) {
    for w in words {
        out.extend_from_slice(&w.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at + n;
        if end > self.bytes.len() {
            return Err(Error::ModelFormat("truncated file".into()));
        }
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn hypervector(&mut self, dim: usize) -> Result<Hypervector> {
        let words = (0..dim.div_ceil(64)).map(|_| self.u64()).collect::<Result<Vec<_>>>()?;
        Hypervector::from_words(dim, words).map_err(|e| Error::ModelFormat(e.to_string()))
    }
}
