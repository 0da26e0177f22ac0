//! Associative memory of class prototypes.

use crate::error::{Error, Result};
use crate::hv::{AccumVector, Hypervector};

/// Class prototypes `C_0 .. C_{K-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociativeMemory {
    prototypes: Vec<Hypervector>,
}

/// Result of a nearest-prototype query.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    /// Normalized Hamming distance to each prototype.
    pub distances: Vec<f64>,
}

impl AssociativeMemory {
    pub fn new(prototypes: Vec<Hypervector>) -> Result<Self> {
        if prototypes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "associative memory needs at least 2 classes, got {}",
                prototypes.len()
            )));
        }
        let dim = prototypes[0].dim();
        if let Some(p) = prototypes.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: p.dim(),
            });
        }
        Ok(Self { prototypes })
    }

    /// Superposition training: each prototype is the majority bundle of its
    /// class's encodings.
    pub fn train_vanilla<'a, I>(encoded: I, classes: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a Hypervector, usize)>,
    {
        let mut accs: Vec<Option<AccumVector>> = vec![None; classes];
        for (hv, label) in encoded {
            if label >= classes {
                return Err(Error::LabelRange {
                    label,
                    classes,
                    split: "train".into(),
                });
            }
            match &mut accs[label] {
                Some(acc) => acc.add(hv)?,
                slot @ None => {
                    let mut acc = AccumVector::new(hv.dim())?;
                    acc.add(hv)?;
                    *slot = Some(acc);
                }
            }
        }
        let prototypes = accs
            .into_iter()
            .enumerate()
            .map(|(k, acc)| acc.map(|a| a.binarize()).ok_or(Error::MissingClass(k)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(prototypes)
    }

    pub fn classes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn dim(&self) -> usize {
        self.prototypes[0].dim()
    }

    pub fn prototypes(&self) -> &[Hypervector] {
        &self.prototypes
    }

    /// Label of the nearest prototype by Hamming distance, lowest index on
    /// ties.
    pub fn infer(&self, query: &Hypervector) -> Result<Prediction> {
        let counts = self
            .prototypes
            .iter()
            .map(|p| p.hamming_count(query))
            .collect::<Result<Vec<_>>>()?;
        let mut label = 0;
        for (k, &c) in counts.iter().enumerate() {
            if c < counts[label] {
                label = k;
            }
        }
        let dim = query.dim() as f64;
        Ok(Prediction {
            label,
            distances: counts.into_iter().map(|c| c as f64 / dim).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::seq::index::sample;

    fn rand_hv(id: u64, dim: usize) -> Hypervector {
        Hypervector::random(&RngStream::new(21, id), dim).unwrap()
    }

    fn noisy(base: &Hypervector, frac: f64, stream: RngStream) -> Hypervector {
        let mut rng = stream.rng();
        let n = (base.dim() as f64 * frac) as usize;
        let mut out = base.clone();
        out.flip_many(&sample(&mut rng, base.dim(), n).into_vec());
        out
    }

    #[test]
    fn one_sample_per_class() {
        let xs: Vec<Hypervector> = (0..3).map(|i| rand_hv(i, 500)).collect();
        let am = AssociativeMemory::train_vanilla(xs.iter().zip(0..), 3).unwrap();
        assert_eq!(am.prototypes(), &xs[..]);
    }

    #[test]
    fn duplicating_the_training_set_changes_nothing() {
        let xs: Vec<Hypervector> = (0..9).map(|i| rand_hv(i, 500)).collect();
        let labels: Vec<usize> = (0..9).map(|i| i % 3).collect();
        let once = AssociativeMemory::train_vanilla(xs.iter().zip(labels.iter().copied()), 3).unwrap();
        let twice = AssociativeMemory::train_vanilla(
            xs.iter().chain(&xs).zip(labels.iter().chain(&labels).copied()),
            3,
        )
        .unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn prototypes_denoise_their_seeds() {
        let dim = 10_000;
        let seeds: Vec<Hypervector> = (0..3).map(|i| rand_hv(100 + i, dim)).collect();
        let mut data = Vec::new();
        for (k, s) in seeds.iter().enumerate() {
            for j in 0..20 {
                data.push((noisy(s, 0.1, RngStream::new(k as u64, j)), k));
            }
        }
        let am = AssociativeMemory::train_vanilla(data.iter().map(|(h, k)| (h, *k)), 3).unwrap();
        for (k, s) in seeds.iter().enumerate() {
            let h = am.prototypes()[k].hamming(s).unwrap();
            assert!(h <= 0.05, "class {k}: {h}");
        }
    }

    #[test]
    fn missing_class_is_named() {
        let xs = [rand_hv(0, 64), rand_hv(1, 64)];
        let err = AssociativeMemory::train_vanilla([(&xs[0], 0), (&xs[1], 2)], 3).unwrap_err();
        assert!(matches!(err, Error::MissingClass(1)));
    }

    #[test]
    fn exact_match_and_ties() {
        let protos: Vec<Hypervector> = (0..4).map(|i| rand_hv(200 + i, 256)).collect();
        let am = AssociativeMemory::new(protos.clone()).unwrap();
        let p = am.infer(&protos[2]).unwrap();
        assert_eq!(p.label, 2);
        assert_eq!(p.distances[2], 0.0);

        // C_1 differs from C_0 in ten bits; the query flips five of them.
        let a = rand_hv(300, 128);
        let mut b = a.clone();
        b.flip_many(&(0..10).collect::<Vec<_>>());
        let mut q = a.clone();
        q.flip_many(&(0..5).collect::<Vec<_>>());
        let am = AssociativeMemory::new(vec![a, b]).unwrap();
        let p = am.infer(&q).unwrap();
        assert_eq!(p.distances[0], p.distances[1]);
        assert_eq!(p.label, 0);
    }

    #[test]
    fn noisy_query_finds_its_class() {
        let dim = 10_000;
        let protos: Vec<Hypervector> = (0..5).map(|i| rand_hv(400 + i, dim)).collect();
        let am = AssociativeMemory::new(protos.clone()).unwrap();
        let q = noisy(&protos[1], 0.1, RngStream::new(4, 4));
        assert_eq!(am.infer(&q).unwrap().label, 1);
    }

    #[test]
    fn argmin_hamming_is_argmax_cosine_and_permutation_invariant() {
        let protos: Vec<Hypervector> = (0..6).map(|i| rand_hv(500 + i, 333)).collect();
        let am = AssociativeMemory::new(protos.clone()).unwrap();
        let rotated = AssociativeMemory::new(protos.iter().map(|p| p.permute(41)).collect()).unwrap();
        for j in 0..50 {
            let q = rand_hv(600 + j, 333);
            let p = am.infer(&q).unwrap();
            let cos: Vec<f64> = protos.iter().map(|c| c.cosine(&q).unwrap()).collect();
            let best = cos
                .iter()
                .enumerate()
                .fold(0, |b, (k, &c)| if c > cos[b] { k } else { b });
            assert_eq!(p.label, best);
            assert_eq!(rotated.infer(&q.permute(41)).unwrap(), p);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let am = AssociativeMemory::new(vec![rand_hv(0, 64), rand_hv(1, 64)]).unwrap();
        assert!(am.infer(&rand_hv(2, 65)).is_err());
        assert!(AssociativeMemory::new(vec![rand_hv(0, 64)]).is_err());
    }
}
