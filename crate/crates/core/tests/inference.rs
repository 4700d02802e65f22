mod common;

use hashgen::corpus::{Instance, Vocabulary, EOS};
use hashgen::inference::{beam_search, generate, greedy_decode, BeamConfig};
use hashgen::model::{Model, ModelConfig, Variant};
use hashgen::numcore::Tensor;
use hashgen::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(vocab: usize, seed: u64, variant: Variant) -> Model {
    Model::with_init_range(ModelConfig::new(vocab, 6, 5, variant), seed, 0.8).unwrap()
}

fn random_source(seed: u64, vocab: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let post = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(4..vocab)).collect();
    let conv = (0..rng.gen_range(1..8)).map(|_| rng.gen_range(4..vocab)).collect();
    (post, conv)
}

#[test]
fn width_one_is_greedy() {
    for seed in 0..30 {
        let variant = Variant::ALL[seed as usize % 6];
        let model = random_model(14, seed, variant);
        let (post, conv) = random_source(seed, 14);
        let cfg = BeamConfig {
            beam_width: 1,
            max_len: 6,
            top_k: 1,
        };
        let beam = beam_search(&model, &post, &conv, &cfg).unwrap();
        let (tokens, score) = greedy_decode(&model, &post, &conv, 6).unwrap();
        assert_eq!(beam.entries[0].0, tokens, "seed {seed}");
        assert!((beam.entries[0].1 - score).abs() < 1e-12);
    }
}

#[test]
fn eos_point_mass_yields_best_unigram() {
    let mut model = Model::zeros(ModelConfig::new(10, 4, 4, Variant::Full)).unwrap();
    let mut bias = vec![0.0; 10];
    bias[EOS] = 60.0;
    bias[7] = 3.0;
    bias[5] = 2.0;
    model.set_param("out.b", Tensor::new(&[10], bias).unwrap()).unwrap();
    let out = beam_search(&model, &[4, 5], &[6, 7, 8], &BeamConfig::default()).unwrap();
    assert_eq!(out.entries[0].0, vec![7]);
    assert_eq!(out.entries[1].0, vec![5]);
    assert!(out.entries.iter().all(|(t, _)| t.len() == 1));
}

#[test]
fn top_k_above_width_is_rejected() {
    let model = random_model(10, 0, Variant::Full);
    let cfg = BeamConfig {
        beam_width: 3,
        max_len: 4,
        top_k: 4,
    };
    assert!(matches!(beam_search(&model, &[4], &[5], &cfg), Err(Error::Config(_))));
}

#[test]
fn beam_top1_matches_exhaustive_search_on_small_vocab() {
    for seed in 0..10 {
        let model = Model::with_init_range(ModelConfig::new(12, 6, 4, Variant::Full), seed, 2.0).unwrap();
        let (post, conv) = random_source(seed, 12);
        let cfg = BeamConfig {
            beam_width: 12,
            max_len: 3,
            top_k: 1,
        };
        let beam = beam_search(&model, &post, &conv, &cfg).unwrap();
        let all = common::enumerate_candidates(&model, &post, &conv, 3);
        assert_eq!(beam.entries[0].0, all[0].0, "seed {seed}");
        assert!((beam.entries[0].1 - all[0].1).abs() < 1e-9);
    }
}

#[test]
fn generate_preserves_order_and_checks_vocab() {
    let words: Vec<String> = ["alpha", "beta", "gamma", "delta", "eps"].iter().map(|s| s.to_string()).collect();
    let instances: Vec<Instance> = (0..5)
        .map(|i| Instance {
            post: vec![words[i].clone(), words[(i + 1) % 5].clone()],
            conversation: vec![words[(i + 2) % 5].clone()],
            hashtags: vec![vec![words[i].clone()]],
        })
        .collect();
    let vocab = Vocabulary::build(&instances, 100).unwrap();
    let model = random_model(vocab.len(), 4, Variant::Full);
    let cfg = BeamConfig {
        beam_width: 4,
        max_len: 3,
        top_k: 3,
    };
    let preds = generate(&model, &vocab, &instances, &cfg).unwrap();
    for (inst, pred) in instances.iter().zip(&preds) {
        let single = generate(&model, &vocab, std::slice::from_ref(inst), &cfg).unwrap();
        assert_eq!(&single[0], pred);
        assert!(pred.predictions.len() <= 3);
    }
    let other = random_model(vocab.len() + 1, 4, Variant::Full);
    assert!(matches!(generate(&other, &vocab, &instances, &cfg), Err(Error::Checkpoint(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn ranked_output_invariants(seed in 0u64..10_000, width in 1usize..8, max_len in 1usize..5, k in 1usize..8) {
        let k = k.min(width);
        let model = random_model(12, seed, Variant::ALL[(seed % 6) as usize]);
        let (post, conv) = random_source(seed, 12);
        let cfg = BeamConfig { beam_width: width, max_len, top_k: k };
        let a = beam_search(&model, &post, &conv, &cfg).unwrap();
        let b = beam_search(&model, &post, &conv, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.check(k).is_ok());
        prop_assert!(!a.entries.is_empty());
        for (tokens, score) in &a.entries {
            prop_assert!(!tokens.is_empty() && tokens.len() <= max_len);
            prop_assert!(tokens.iter().all(|&t| t >= 4));
            prop_assert!(*score <= 0.0 && score.is_finite());
        }
    }
}
