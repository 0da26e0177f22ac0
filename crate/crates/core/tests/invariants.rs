//! Cross-module invariants.

use proptest::prelude::*;

use bihdtrans::attention::{forward_last, HeadParams};
use bihdtrans::classifier::AssociativeMemory;
use bihdtrans::dataset::{load_dataset, write_dataset};
use bihdtrans::encoder::SampleBatch;
use bihdtrans::item_memory::QuantRange;
use bihdtrans::model::build_encoder;
use bihdtrans::trainer::{forward_train, ShadowParams, TrainConfig};
use bihdtrans::{Hypervector, Model, RngStream};

fn sample(features: usize, length: usize, seed: u64, label: usize) -> SampleBatch {
    use rand::Rng;
    let mut rng = RngStream::new(seed, 9).rng();
    let values = (0..features)
        .map(|_| (0..length).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    SampleBatch::new(values, label).unwrap()
}

fn random_model(seed: u64, dim: usize, heads: usize, classes: usize) -> Model {
    let stream = RngStream::new(seed, 42);
    let ranges = vec![QuantRange::new(-2.0, 2.0, 16).unwrap(); 3];
    let hd = dim / heads;
    let head_params = (0..heads)
        .map(|h| HeadParams::random(&stream.substream(h as u64), hd).unwrap())
        .collect();
    let protos = (0..classes)
        .map(|k| Hypervector::random(&stream.substream(100 + k as u64), dim).unwrap())
        .collect();
    Model::new(seed, 5, ranges, head_params, AssociativeMemory::new(protos).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn model_bytes_roundtrip(seed in 0u64..1000, heads in 1usize..6, classes in 2usize..6) {
        let dim = heads * 64 + 64 * (seed as usize % 3) * heads;
        let m = random_model(seed, dim, heads, classes);
        let bytes = m.to_bytes();
        let back = Model::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        let s = sample(3, 5, seed, 0);
        prop_assert_eq!(back.predict(&s).unwrap(), m.predict(&s).unwrap());
    }

    #[test]
    fn truncated_model_files_are_rejected(seed in 0u64..100, cut in 1usize..200) {
        let bytes = random_model(seed, 256, 2, 3).to_bytes();
        let cut = cut.min(bytes.len());
        prop_assert!(Model::from_bytes(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn training_forward_agrees_with_inference(seed in 0u64..500, heads in 1usize..5) {
        let dim = heads * 80;
        let shadow = ShadowParams::init(3, dim, heads, RngStream::new(seed, 3)).unwrap();
        let params = shadow.binarize().unwrap();
        let am = params.associative_memory().unwrap();
        let encoder = build_encoder(seed, dim, vec![QuantRange::new(-2.0, 2.0, 8).unwrap(); 3]).unwrap();
        let tokens = encoder.encode_sequence(&sample(3, 6, seed, 1)).unwrap();
        let cfg = TrainConfig { dim, heads, dropout: 0.0, ..TrainConfig::default() };
        let (logits, tape) = forward_train(&tokens, &params, &cfg, None).unwrap();
        let out = forward_last(&tokens, &params.heads).unwrap();
        prop_assert_eq!(&tape.output, &out);
        // Logits are scaled dot products with the signed prototypes, so the
        // largest logit is the nearest prototype in Hamming distance.
        let best = am.infer(&out).unwrap();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((logits[best.label] - top).abs() < 1e-12);
    }
}

#[test]
fn dataset_file_roundtrip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let samples: Vec<SampleBatch> = (0..20).map(|i| sample(4, 7, i, i as usize % 3)).collect();
    write_dataset(&path, &samples).unwrap();
    assert_eq!(load_dataset(&path).unwrap().samples, samples);
}

#[test]
fn shipped_configs_parse() {
    use bihdtrans::config::{load_train_config, theorem1_config, theorem2_config, KeyValues};
    use bihdtrans::distortion::{Theorem1Config, Theorem2Config};
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let jv = load_train_config(dir.join("japanese_vowels.cfg")).unwrap();
    assert_eq!(jv, TrainConfig::default());
    let rs = load_train_config(dir.join("racket_sports.cfg")).unwrap();
    assert_eq!((rs.learning_rate, rs.dropout, rs.batch_size, rs.epochs), (1e-5, 0.1, 1, 200));
    let t1 = theorem1_config(KeyValues::load(dir.join("theorem1.cfg")).unwrap()).unwrap();
    assert_eq!(t1, Theorem1Config::default());
    let t2 = theorem2_config(KeyValues::load(dir.join("theorem2.cfg")).unwrap()).unwrap();
    assert_eq!(t2, Theorem2Config::default());
}
