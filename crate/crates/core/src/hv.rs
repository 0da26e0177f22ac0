//! Bit-packed bipolar hypervectors.
//!
//! Component `i` of a hypervector lives in bit `i % 64` of word `i / 64`.
//! A set bit encodes `+1`, a clear bit encodes `-1`, so the bipolar product
//! of two components is the XNOR of their bits. Bits at or above `dim` in the
//! last word are always zero.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::rng::RngStream;

const WORD_BITS: usize = 64;

#[inline]
fn words_for(dim: usize) -> usize {
    dim.div_ceil(WORD_BITS)
}

#[inline]
fn tail_mask(dim: usize) -> u64 {
    match dim % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// A `dim`-dimensional vector over {-1, +1}.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Hypervector {
    dim: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for Hypervector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let preview: String = (0..self.dim.min(32))
            .map(|i| if self.bit(i) { '1' } else { '0' })
            .collect();
        write!(f, "Hypervector(dim={}, bits={}", self.dim, preview)?;
        if self.dim > 32 {
            write!(f, "...")?;
        }
        write!(f, ")")
    }
}

impl Hypervector {
    /// All components `-1` (every bit clear).
    pub fn negative_ones(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            words: vec![0; words_for(dim)],
        })
    }

    /// All components `+1`; the identity element of [`bind`](Self::bind).
    pub fn ones(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let mut words = vec![u64::MAX; words_for(dim)];
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(dim);
        }
        Ok(Self { dim, words })
    }

    /// Builds from packed words, rejecting wrong lengths and set padding bits.
    pub fn from_words(dim: usize, words: Vec<u64>) -> Result<Self> {
        check_dim(dim)?;
        if words.len() != words_for(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} words supplied for dimension {dim}, expected {}",
                words.len(),
                words_for(dim)
            )));
        }
        if words[words.len() - 1] & !tail_mask(dim) != 0 {
            return Err(Error::InvalidArgument(
                "padding bits above the dimension are set".into(),
            ));
        }
        Ok(Self { dim, words })
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let mut hv = Self::negative_ones(bits.len())?;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                hv.words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
            }
        }
        Ok(hv)
    }

    /// Builds from ±1 components; any non-negative entry counts as `+1`.
    pub fn from_bipolar(values: &[i8]) -> Result<Self> {
        let bits: Vec<bool> = values.iter().map(|&v| v >= 0).collect();
        Self::from_bits(&bits)
    }

    /// Sign of each real component, with `sign(0) = +1`.
    pub fn from_signs(values: &[f64]) -> Result<Self> {
        let bits: Vec<bool> = values.iter().map(|&v| v >= 0.0).collect();
        Self::from_bits(&bits)
    }

    /// Draws a hypervector from the start of `stream`.
    pub fn random(stream: &RngStream, dim: usize) -> Result<Self> {
        Self::random_with(&mut stream.rng(), dim)
    }

    /// Draws a hypervector with each bit an independent fair coin from `rng`.
    pub fn random_with<R: RngCore + ?Sized>(rng: &mut R, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let mut words: Vec<u64> = (0..words_for(dim)).map(|_| rng.next_u64()).collect();
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(dim);
        }
        Ok(Self { dim, words })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Raw bit at `i` (`true` encodes `+1`).
    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.dim, "index {i} out of range for dimension {}", self.dim);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    /// Bipolar component at `i`.
    #[inline]
    pub fn get(&self, i: usize) -> i8 {
        if self.bit(i) {
            1
        } else {
            -1
        }
    }

    pub fn to_bipolar(&self) -> Vec<i8> {
        let mut out = Vec::with_capacity(self.dim);
        self.for_each_bipolar(|_, v| out.push(v as i8));
        out
    }

    /// Components as `f64` (±1.0).
    pub fn to_f64(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim);
        self.for_each_bipolar(|_, v| out.push(v as f64));
        out
    }

    /// Calls `f(index, ±1)` for every component in order.
    #[inline]
    pub fn for_each_bipolar(&self, mut f: impl FnMut(usize, i32)) {
        for (w, &word) in self.words.iter().enumerate() {
            let base = w * WORD_BITS;
            let n = WORD_BITS.min(self.dim - base);
            for j in 0..n {
                f(base + j, (((word >> j) & 1) as i32) * 2 - 1);
            }
        }
    }

    /// Same vector with component `i` negated.
    pub fn with_flipped(&self, i: usize) -> Self {
        assert!(i < self.dim);
        let mut out = self.clone();
        out.words[i / WORD_BITS] ^= 1 << (i % WORD_BITS);
        out
    }

    /// Negates every component listed in `indices`.
    pub fn flip_many(&mut self, indices: &[usize]) {
        for &i in indices {
            assert!(i < self.dim);
            self.words[i / WORD_BITS] ^= 1 << (i % WORD_BITS);
        }
    }

    pub fn complement(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(self.dim);
        }
        Self {
            dim: self.dim,
            words,
        }
    }

    /// Number of `+1` components.
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Element-wise bipolar product (XNOR of the packed bits).
    pub fn bind(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut words: Vec<u64> = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| !(a ^ b))
            .collect();
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(self.dim);
        }
        Ok(Self {
            dim: self.dim,
            words,
        })
    }

    /// Cyclic rotation: `result[i] = self[(i - k) mod dim]`. Negative `k`
    /// rotates the other way.
    pub fn permute(&self, k: i64) -> Self {
        let dim = self.dim as i64;
        let k = k.rem_euclid(dim) as usize;
        if k == 0 {
            return self.clone();
        }
        let head = self.slice(self.dim - k, k);
        let tail = self.slice(0, self.dim - k);
        Self::concat(&[head, tail]).expect("non-empty parts")
    }

    /// Number of differing components.
    pub fn hamming_count(&self, other: &Self) -> Result<usize> {
        self.check_same(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// Fraction of differing components, in `[0, 1]`.
    pub fn hamming(&self, other: &Self) -> Result<f64> {
        Ok(self.hamming_count(other)? as f64 / self.dim as f64)
    }

    /// Integer dot product of the bipolar vectors: `dim - 2 * hamming_count`.
    pub fn dot_bipolar(&self, other: &Self) -> Result<i64> {
        let diff = self.hamming_count(other)? as i64;
        Ok(self.dim as i64 - 2 * diff)
    }

    /// Cosine similarity, `1 - 2 * hamming`.
    pub fn cosine(&self, other: &Self) -> Result<f64> {
        Ok(self.dot_bipolar(other)? as f64 / self.dim as f64)
    }

    /// Components `start .. start + len` as a new hypervector.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        assert!(len >= 1 && start + len <= self.dim, "slice out of range");
        let mut words = Vec::with_capacity(words_for(len));
        for w in 0..words_for(len) {
            let off = start + w * WORD_BITS;
            let idx = off / WORD_BITS;
            let shift = off % WORD_BITS;
            let mut v = self.words[idx] >> shift;
            if shift != 0 && idx + 1 < self.words.len() {
                v |= self.words[idx + 1] << (WORD_BITS - shift);
            }
            words.push(v);
        }
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(len);
        }
        Self { dim: len, words }
    }

    /// Concatenation of `parts` in order.
    pub fn concat(parts: &[Self]) -> Result<Self> {
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let mut out = Self::negative_ones(dim)?;
        let mut offset = 0;
        for part in parts {
            for (j, &v) in part.words.iter().enumerate() {
                let off = offset + j * WORD_BITS;
                let idx = off / WORD_BITS;
                let shift = off % WORD_BITS;
                out.words[idx] |= v << shift;
                if shift != 0 && idx + 1 < out.words.len() {
                    out.words[idx + 1] |= v >> (WORD_BITS - shift);
                }
            }
            offset += part.dim;
        }
        Ok(out)
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidDimension(dim));
    }
    Ok(())
}

/// Signed per-component tallies of bundled hypervectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccumVector {
    dim: usize,
    counts: Vec<i32>,
    added: usize,
}

impl AccumVector {
    pub fn new(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            counts: vec![0; dim],
            added: 0,
        })
    }

    /// Sums the bipolar forms of `vs`, each scaled by its optional 0/1 weight.
    /// An empty input yields the zero accumulator.
    pub fn accumulate<'a, I>(dim: usize, vs: I, weights: Option<&[bool]>) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Hypervector>,
    {
        let mut acc = Self::new(dim)?;
        let mut n = 0;
        for (j, hv) in vs.into_iter().enumerate() {
            n += 1;
            let take = match weights {
                Some(w) => *w.get(j).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "{} weights for more than {} vectors",
                        w.len(),
                        w.len()
                    ))
                })?,
                None => true,
            };
            if take {
                acc.add(hv)?;
            } else if hv.dim != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: hv.dim,
                });
            }
        }
        if let Some(w) = weights {
            if w.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "{} weights for {n} vectors",
                    w.len()
                )));
            }
        }
        Ok(acc)
    }

    /// Adds one hypervector.
    pub fn add(&mut self, hv: &Hypervector) -> Result<()> {
        if hv.dim != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: hv.dim,
            });
        }
        for (chunk, &word) in self.counts.chunks_mut(WORD_BITS).zip(&hv.words) {
            for (j, c) in chunk.iter_mut().enumerate() {
                *c += (((word >> j) & 1) as i32) * 2 - 1;
            }
        }
        self.added += 1;
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn counts(&self) -> &[i32] {
        &self.counts
    }

    /// Number of hypervectors added so far.
    #[inline]
    pub fn added(&self) -> usize {
        self.added
    }

    /// Sign of each count, with ties (`0`) going to `+1`.
    pub fn binarize(&self) -> Hypervector {
        let mut words = vec![0u64; words_for(self.dim)];
        for (w, chunk) in words.iter_mut().zip(self.counts.chunks(WORD_BITS)) {
            for (j, &c) in chunk.iter().enumerate() {
                *w |= ((c >= 0) as u64) << j;
            }
        }
        Hypervector {
            dim: self.dim,
            words,
        }
    }
}

/// Bit-sliced vertical counters of `+1` components.
///
/// Plane `p` holds bit `p` of every component's count, so adding a
/// hypervector is a ripple-carry over a handful of words instead of one
/// update per component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitCounter {
    dim: usize,
    planes: Vec<Vec<u64>>,
    added: usize,
}

impl BitCounter {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        Ok(Self {
            dim,
            planes: Vec::new(),
            added: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn added(&self) -> usize {
        self.added
    }

    fn add_words(&mut self, words: impl Iterator<Item = u64>) {
        let nw = words_for(self.dim);
        self.added += 1;
        for (w, word) in words.enumerate() {
            let mut carry = word;
            for plane in &mut self.planes {
                if carry == 0 {
                    break;
                }
                let p = plane[w];
                plane[w] = p ^ carry;
                carry &= p;
            }
            if carry != 0 {
                let mut plane = vec![0u64; nw];
                plane[w] = carry;
                self.planes.push(plane);
            }
        }
    }

    pub fn add(&mut self, hv: &Hypervector) -> Result<()> {
        if hv.dim != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: hv.dim,
            });
        }
        self.add_words(hv.words.iter().copied());
        Ok(())
    }

    /// Adds `a ⊙ b` without materializing it.
    pub fn add_bound(&mut self, a: &Hypervector, b: &Hypervector) -> Result<()> {
        for hv in [a, b] {
            if hv.dim != self.dim {
                return Err(Error::DimensionMismatch {
                    left: self.dim,
                    right: hv.dim,
                });
            }
        }
        let last = words_for(self.dim) - 1;
        let tail = tail_mask(self.dim);
        self.add_words(a.words.iter().zip(&b.words).enumerate().map(|(w, (x, y))| {
            let m = if w == last { tail } else { u64::MAX };
            !(x ^ y) & m
        }));
        Ok(())
    }

    /// Number of `+1` inputs at component `i`.
    pub fn ones(&self, i: usize) -> usize {
        let (w, b) = (i / WORD_BITS, i % WORD_BITS);
        self.planes
            .iter()
            .enumerate()
            .map(|(p, plane)| (((plane[w] >> b) & 1) as usize) << p)
            .sum()
    }

    /// Bipolar sums, `2 * ones - added`.
    pub fn counts(&self) -> Vec<i32> {
        (0..self.dim)
            .map(|i| 2 * self.ones(i) as i32 - self.added as i32)
            .collect()
    }

    /// Sign of the bipolar sums, zero mapping to `+1`.
    pub fn binarize(&self) -> Hypervector {
        let mut words = vec![0u64; words_for(self.dim)];
        for i in 0..self.dim {
            if 2 * self.ones(i) >= self.added {
                words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
            }
        }
        Hypervector {
            dim: self.dim,
            words,
        }
    }
}

/// Majority bundle of `vs` (accumulate then binarize).
pub fn bundle<'a, I>(dim: usize, vs: I) -> Result<Hypervector>
where
    I: IntoIterator<Item = &'a Hypervector>,
{
    Ok(AccumVector::accumulate(dim, vs, None)?.binarize())
}
