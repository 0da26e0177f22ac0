//! Spatial encoding of each time step and the vanilla temporal encoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hv::{AccumVector, Hypervector};
use crate::item_memory::{LevelMemory, PositionMemory, QuantRange};

/// One multivariate series: `values[feature][time]` and a class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBatch {
    pub label: usize,
    pub values: Vec<Vec<f64>>,
}

impl SampleBatch {
    /// Validates shape (non-empty, rectangular) and finiteness.
    pub fn new(values: Vec<Vec<f64>>, label: usize) -> Result<Self> {
        let s = Self { label, values };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.values.len();
        if n == 0 {
            return Err(Error::Shape("sample has no features".into()));
        }
        let l = self.values[0].len();
        if l == 0 {
            return Err(Error::Shape("sample has no time steps".into()));
        }
        for (i, row) in self.values.iter().enumerate() {
            if row.len() != l {
                return Err(Error::Shape(format!(
                    "feature {i} has {} time steps, feature 0 has {l}",
                    row.len()
                )));
            }
            if let Some(t) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite value at feature {i}, time {t}"
                )));
            }
        }
        Ok(())
    }

    /// Feature count `N`.
    pub fn features(&self) -> usize {
        self.values.len()
    }

    /// Series length `L`.
    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values of every feature at 0-based time `t`.
    pub fn column(&self, t: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[t]).collect()
    }
}

/// Encoded tokens `H_e^1 .. H_e^L` of one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<Hypervector>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<Hypervector>) -> Result<Self> {
        let dim = tokens
            .first()
            .map(Hypervector::dim)
            .ok_or_else(|| Error::InvalidArgument("token sequence must be non-empty".into()))?;
        if let Some(t) = tokens.iter().find(|t| t.dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: t.dim(),
            });
        }
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &[Hypervector] {
        &self.tokens
    }

    pub fn dim(&self) -> usize {
        self.tokens[0].dim()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn last(&self) -> &Hypervector {
        self.tokens.last().expect("non-empty")
    }
}

/// Item memories and per-feature quantizers shared by every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub positions: PositionMemory,
    pub levels: LevelMemory,
    pub ranges: Vec<QuantRange>,
}

impl Encoder {
    pub fn new(positions: PositionMemory, levels: LevelMemory, ranges: Vec<QuantRange>) -> Result<Self> {
        if positions.len() != ranges.len() {
            return Err(Error::Shape(format!(
                "{} position entries but {} quantizer ranges",
                positions.len(),
                ranges.len()
            )));
        }
        if positions.dim() != levels.dim() {
            return Err(Error::DimensionMismatch {
                left: positions.dim(),
                right: levels.dim(),
            });
        }
        if let Some(r) = ranges.iter().find(|r| r.q != levels.levels()) {
            return Err(Error::Config(format!(
                "quantizer has {} levels but level memory has {}",
                r.q,
                levels.levels()
            )));
        }
        Ok(Self {
            positions,
            levels,
            ranges,
        })
    }

    pub fn dim(&self) -> usize {
        self.positions.dim()
    }

    pub fn features(&self) -> usize {
        self.positions.len()
    }

    /// Unrotated spatial encoding `sign(sum_i F_i * V_{level(f_i)})`.
    pub fn spatial(&self, column: &[f64]) -> Result<Hypervector> {
        if column.len() != self.features() {
            return Err(Error::Shape(format!(
                "column has {} features, encoder expects {}",
                column.len(),
                self.features()
            )));
        }
        let mut acc = AccumVector::new(self.dim())?;
        for ((value, range), pos) in column.iter().zip(&self.ranges).zip(self.positions.entries()) {
            let level = range.quantize(*value)?;
            acc.add(&pos.bind(self.levels.level(level))?)?;
        }
        Ok(acc.binarize())
    }

    /// Token for 1-based time step `t`: the spatial encoding rotated by `t`.
    ///
    /// Rotation is applied after the sign, which yields the same bits as
    /// rotating the integer bundle first.
    pub fn encode_timestep(&self, column: &[f64], t: usize) -> Result<Hypervector> {
        if t == 0 {
            return Err(Error::InvalidArgument("time steps are 1-based".into()));
        }
        Ok(self.spatial(column)?.permute(t as i64))
    }

    /// Tokens for every time step of `sample`.
    pub fn encode_sequence(&self, sample: &SampleBatch) -> Result<TokenSequence> {
        let len = sample.len();
        if len > self.dim() {
            return Err(Error::Config(format!(
                "series length {len} exceeds dimension {}; rotations would repeat",
                self.dim()
            )));
        }
        let tokens = (0..len)
            .map(|t| self.encode_timestep(&sample.column(t), t + 1))
            .collect::<Result<Vec<_>>>()?;
        TokenSequence::new(tokens)
    }
}

/// Vanilla temporal encoding: the binding of `rho^t(S_t)` over `t = 1..L`.
pub fn vanilla_temporal_encode(spatial: &[Hypervector]) -> Result<Hypervector> {
    let (first, rest) = spatial
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("temporal encoding needs at least one step".into()))?;
    let mut out = first.permute(1);
    for (i, s) in rest.iter().enumerate() {
        out = out.bind(&s.permute(i as i64 + 2))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::Rng;

    fn encoder(n: usize, q: usize, dim: usize, seed: u64) -> Encoder {
        Encoder::new(
            PositionMemory::build(n, dim, RngStream::new(seed, 1)).unwrap(),
            LevelMemory::build(q, dim, RngStream::new(seed, 2)).unwrap(),
            vec![QuantRange::new(-1.0, 1.0, q).unwrap(); n],
        )
        .unwrap()
    }

    #[test]
    fn single_feature_token() {
        let enc = encoder(1, 8, 300, 1);
        let tok = enc.encode_timestep(&[0.3], 5).unwrap();
        let level = enc.ranges[0].quantize(0.3).unwrap();
        let want = enc.positions.get(0).bind(enc.levels.level(level)).unwrap().permute(5);
        assert_eq!(tok, want);
    }

    #[test]
    fn identical_columns_differ_by_one_rotation() {
        let enc = encoder(4, 16, 1000, 2);
        let col = [0.1, -0.5, 0.9, 0.0];
        let t1 = enc.encode_timestep(&col, 1).unwrap();
        let t2 = enc.encode_timestep(&col, 2).unwrap();
        assert_eq!(t1.permute(1).hamming(&t2).unwrap(), 0.0);
    }

    #[test]
    fn rotation_commutes_with_sign() {
        let enc = encoder(6, 16, 700, 3);
        let col = [0.1, -0.5, 0.9, 0.0, 0.4, -0.2];
        // Rotate the integer bundle before taking signs.
        let mut acc = AccumVector::new(700).unwrap();
        for i in 0..6 {
            let lvl = enc.ranges[i].quantize(col[i]).unwrap();
            acc.add(&enc.positions.get(i).bind(enc.levels.level(lvl)).unwrap())
                .unwrap();
        }
        let t = 9;
        let counts = acc.counts();
        let rotated: Vec<bool> = (0..700)
            .map(|i| counts[(i + 700 - t) % 700] >= 0)
            .collect();
        let want = Hypervector::from_bits(&rotated).unwrap();
        assert_eq!(enc.encode_timestep(&col, t).unwrap(), want);
        assert_eq!(
            enc.encode_timestep(&col, t).unwrap(),
            enc.spatial(&col).unwrap().permute(t as i64)
        );
    }

    #[test]
    fn decoding_recovers_levels() {
        let (n, q, dim) = (5, 16, 10_000);
        let enc = encoder(n, q, dim, 4);
        let mut rng = RngStream::new(4, 99).rng();
        let col: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = 3;
        let token = enc.encode_timestep(&col, t).unwrap();
        let unrotated = token.permute(-(t as i64));
        let mut hits = 0;
        for i in 0..n {
            let truth = enc.ranges[i].quantize(col[i]).unwrap();
            let probe = unrotated.bind(enc.positions.get(i)).unwrap();
            let h = probe.hamming(enc.levels.level(truth)).unwrap();
            assert!(h <= 0.35, "feature {i}: {h}");
            // Brute-force decode over every level.
            let best = (1..=q)
                .min_by_key(|&l| probe.hamming_count(enc.levels.level(l)).unwrap())
                .unwrap();
            hits += (best == truth) as usize;
        }
        assert!(hits as f64 >= 0.9 * n as f64, "{hits}/{n}");
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let enc = encoder(3, 8, 256, 5);
        assert!(matches!(enc.spatial(&[0.0, 1.0]), Err(Error::Shape(_))));
        assert!(enc.encode_timestep(&[0.0; 3], 0).is_err());
        let pm = PositionMemory::build(3, 256, RngStream::new(0, 0)).unwrap();
        let lm = LevelMemory::build(8, 256, RngStream::new(0, 1)).unwrap();
        assert!(Encoder::new(pm.clone(), lm.clone(), vec![QuantRange::new(0.0, 1.0, 8).unwrap(); 2]).is_err());
        assert!(Encoder::new(pm, lm, vec![QuantRange::new(0.0, 1.0, 9).unwrap(); 3]).is_err());
    }

    #[test]
    fn single_step_sequence() {
        let enc = encoder(2, 8, 256, 6);
        let s = SampleBatch::new(vec![vec![0.2], vec![-0.3]], 0).unwrap();
        let seq = enc.encode_sequence(&s).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.tokens()[0], enc.encode_timestep(&[0.2, -0.3], 1).unwrap());
    }

    #[test]
    fn feature_order_is_irrelevant_when_memories_follow() {
        let enc = encoder(4, 8, 512, 7);
        let s = SampleBatch::new(
            vec![vec![0.1, 0.2], vec![-0.9, 0.3], vec![0.5, 0.5], vec![0.0, -1.0]],
            0,
        )
        .unwrap();
        let order = [2usize, 0, 3, 1];
        let permuted = Encoder::new(
            PositionMemory::from_entries(
                order.iter().map(|&i| enc.positions.get(i).clone()).collect(),
                enc.positions.stream(),
            )
            .unwrap(),
            enc.levels.clone(),
            order.iter().map(|&i| enc.ranges[i]).collect(),
        )
        .unwrap();
        let s2 = SampleBatch::new(order.iter().map(|&i| s.values[i].clone()).collect(), 0).unwrap();
        assert_eq!(enc.encode_sequence(&s).unwrap(), permuted.encode_sequence(&s2).unwrap());
    }

    #[test]
    fn sequence_is_deterministic() {
        let s = SampleBatch::new(vec![vec![0.3, -0.2, 0.7]; 3], 1).unwrap();
        let a = encoder(3, 16, 2048, 8).encode_sequence(&s).unwrap();
        let b = encoder(3, 16, 2048, 8).encode_sequence(&s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_validation() {
        assert!(SampleBatch::new(vec![], 0).is_err());
        assert!(SampleBatch::new(vec![vec![1.0], vec![1.0, 2.0]], 0).is_err());
        assert!(SampleBatch::new(vec![vec![f64::NAN]], 0).is_err());
    }

    #[test]
    fn vanilla_temporal_examples() {
        let dim = 10_000;
        let s: Vec<Hypervector> = (0..3)
            .map(|i| Hypervector::random(&RngStream::new(9, i), dim).unwrap())
            .collect();
        assert_eq!(vanilla_temporal_encode(&s[..1]).unwrap(), s[0].permute(1));
        assert!(vanilla_temporal_encode(&[]).is_err());

        let out = vanilla_temporal_encode(&s).unwrap();
        let rotated: Vec<Hypervector> =
            s.iter().enumerate().map(|(t, h)| h.permute(t as i64 + 1)).collect();
        let mut backwards = rotated[2].clone();
        for r in rotated[..2].iter().rev() {
            backwards = backwards.bind(r).unwrap();
        }
        assert_eq!(out, backwards);
        for r in &rotated {
            let h = out.hamming(r).unwrap();
            assert!((0.47..=0.53).contains(&h), "{h}");
        }
    }
}
