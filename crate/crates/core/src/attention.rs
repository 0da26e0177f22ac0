//! Multi-head binarized self-attention over hypervector tokens.
//!
//! The `D` dimensions are split into `N_h` contiguous slices of `D / N_h`
//! bits. Head `h` binds its slice of every token with `bv_q`, `bv_k`, `bv_v`,
//! keeps a 0/1 score `[q_t . k_i > 0]` per token pair, majority-bundles the
//! selected values and binds the result with `bv_a`. Head outputs are
//! concatenated back to `D` bits. There is no scaling, softmax, feed-forward
//! block, residual or normalization.
//!
//! Token indices in this module are 0-based.

use crate::encoder::TokenSequence;
use crate::error::{Error, Result};
use crate::hv::{AccumVector, Hypervector};
use crate::rng::RngStream;

/// Binding hypervectors of one head, each `D / N_h` bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadParams {
    pub bv_q: Hypervector,
    pub bv_k: Hypervector,
    pub bv_v: Hypervector,
    pub bv_a: Hypervector,
}

impl HeadParams {
    pub fn new(bv_q: Hypervector, bv_k: Hypervector, bv_v: Hypervector, bv_a: Hypervector) -> Result<Self> {
        let d = bv_q.dim();
        for other in [&bv_k, &bv_v, &bv_a] {
            if other.dim() != d {
                return Err(Error::DimensionMismatch {
                    left: d,
                    right: other.dim(),
                });
            }
        }
        Ok(Self { bv_q, bv_k, bv_v, bv_a })
    }

    /// All four binding vectors set to the bind identity.
    pub fn identity(dim: usize) -> Result<Self> {
        let one = Hypervector::ones(dim)?;
        Ok(Self {
            bv_q: one.clone(),
            bv_k: one.clone(),
            bv_v: one.clone(),
            bv_a: one,
        })
    }

    pub fn random(stream: &RngStream, dim: usize) -> Result<Self> {
        let mut rng = stream.rng();
        Ok(Self {
            bv_q: Hypervector::random_with(&mut rng, dim)?,
            bv_k: Hypervector::random_with(&mut rng, dim)?,
            bv_v: Hypervector::random_with(&mut rng, dim)?,
            bv_a: Hypervector::random_with(&mut rng, dim)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.bv_q.dim()
    }
}

/// Width of each head's slice; `dim` must split evenly.
pub fn head_dim(dim: usize, heads: usize) -> Result<usize> {
    if heads == 0 || dim % heads != 0 {
        return Err(Error::Config(format!(
            "dimension {dim} is not divisible into {heads} heads"
        )));
    }
    Ok(dim / heads)
}

/// Binary attention mask; row `t` selects the values bundled for token `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    pub rows: Vec<Vec<bool>>,
}

/// Query, key and value slices of one head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projected {
    pub q: Vec<Hypervector>,
    pub k: Vec<Hypervector>,
    pub v: Vec<Hypervector>,
}

/// Slice `head_index` of each token, bound with the head's query, key and
/// value vectors.
pub fn project_qkv(tokens: &TokenSequence, head: &HeadParams, head_index: usize) -> Result<Projected> {
    let d = head.dim();
    let start = head_index * d;
    if start + d > tokens.dim() {
        return Err(Error::Config(format!(
            "head {head_index} of width {d} exceeds token dimension {}",
            tokens.dim()
        )));
    }
    let mut out = Projected {
        q: Vec::with_capacity(tokens.len()),
        k: Vec::with_capacity(tokens.len()),
        v: Vec::with_capacity(tokens.len()),
    };
    for tok in tokens.tokens() {
        let slice = tok.slice(start, d);
        out.q.push(slice.bind(&head.bv_q)?);
        out.k.push(slice.bind(&head.bv_k)?);
        out.v.push(slice.bind(&head.bv_v)?);
    }
    Ok(out)
}

/// Integer dot products of one query with every key.
pub fn score_dots(query: &Hypervector, keys: &[Hypervector]) -> Result<Vec<i64>> {
    keys.iter().map(|k| query.dot_bipolar(k)).collect()
}

/// One mask row: 1 where the dot product is strictly positive.
pub fn score_row(query: &Hypervector, keys: &[Hypervector]) -> Result<Vec<bool>> {
    Ok(score_dots(query, keys)?.into_iter().map(|s| s > 0).collect())
}

/// Full `L x L` mask.
pub fn attention_scores(q: &[Hypervector], k: &[Hypervector]) -> Result<AttentionMask> {
    if q.len() != k.len() {
        return Err(Error::Shape(format!(
            "{} queries but {} keys",
            q.len(),
            k.len()
        )));
    }
    let rows = q
        .iter()
        .map(|qt| score_row(qt, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttentionMask { rows })
}

/// Majority bundle of the values selected by `mask_row`. An all-zero row
/// passes `values[t]` through unchanged.
pub fn selective_bundle(mask_row: &[bool], values: &[Hypervector], t: usize) -> Result<Hypervector> {
    if mask_row.len() != values.len() {
        return Err(Error::Shape(format!(
            "mask row of length {} for {} values",
            mask_row.len(),
            values.len()
        )));
    }
    if !mask_row.iter().any(|&b| b) {
        return values
            .get(t)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("token {t} out of range")));
    }
    let dim = values[0].dim();
    Ok(AccumVector::accumulate(dim, values, Some(mask_row))?.binarize())
}

/// Final binding with `bv_a`.
pub fn head_output(bundled: &Hypervector, head: &HeadParams) -> Result<Hypervector> {
    bundled.bind(&head.bv_a)
}

/// Which tokens to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    AllTokens,
    LastToken,
}

/// Runs every head and concatenates their outputs per token. In
/// [`Mode::LastToken`] only the final mask row is computed and a single
/// hypervector is returned.
pub fn forward(tokens: &TokenSequence, heads: &[HeadParams], mode: Mode) -> Result<Vec<Hypervector>> {
    check_heads(tokens, heads)?;
    let len = tokens.len();
    let rows: Vec<usize> = match mode {
        Mode::AllTokens => (0..len).collect(),
        Mode::LastToken => vec![len - 1],
    };
    let mut per_row: Vec<Vec<Hypervector>> = vec![Vec::with_capacity(heads.len()); rows.len()];
    for (h, head) in heads.iter().enumerate() {
        let p = project_qkv(tokens, head, h)?;
        for (slot, &t) in per_row.iter_mut().zip(&rows) {
            let mask = score_row(&p.q[t], &p.k)?;
            let bundled = selective_bundle(&mask, &p.v, t)?;
            slot.push(head_output(&bundled, head)?);
        }
    }
    per_row.iter().map(|parts| Hypervector::concat(parts)).collect()
}

/// Final-token output only.
pub fn forward_last(tokens: &TokenSequence, heads: &[HeadParams]) -> Result<Hypervector> {
    Ok(forward(tokens, heads, Mode::LastToken)?.remove(0))
}

/// Intermediates of one head for the final token, kept for backpropagation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadTrace {
    /// `q_L . k_i` for every token `i`.
    pub dots: Vec<i64>,
    pub mask: Vec<bool>,
    /// Whether the all-zero fallback fired.
    pub fallback: bool,
    /// Bundled values before binding with `bv_a`.
    pub bundled: Hypervector,
}

/// Same result as [`forward_last`] plus the per-head intermediates.
pub fn forward_last_traced(tokens: &TokenSequence, heads: &[HeadParams]) -> Result<(Hypervector, Vec<HeadTrace>)> {
    check_heads(tokens, heads)?;
    let last = tokens.len() - 1;
    let mut outputs = Vec::with_capacity(heads.len());
    let mut traces = Vec::with_capacity(heads.len());
    for (h, head) in heads.iter().enumerate() {
        let p = project_qkv(tokens, head, h)?;
        let dots = score_dots(&p.q[last], &p.k)?;
        let mask: Vec<bool> = dots.iter().map(|&s| s > 0).collect();
        let fallback = !mask.iter().any(|&b| b);
        let bundled = selective_bundle(&mask, &p.v, last)?;
        outputs.push(head_output(&bundled, head)?);
        traces.push(HeadTrace {
            dots,
            mask,
            fallback,
            bundled,
        });
    }
    Ok((Hypervector::concat(&outputs)?, traces))
}

fn check_heads(tokens: &TokenSequence, heads: &[HeadParams]) -> Result<()> {
    let d = head_dim(tokens.dim(), heads.len())?;
    if let Some(h) = heads.iter().find(|h| h.dim() != d) {
        return Err(Error::Config(format!(
            "head width {} does not match {} / {} = {d}",
            h.dim(),
            tokens.dim(),
            heads.len()
        )));
    }
    Ok(())
}
