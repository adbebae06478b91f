use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use smn_core::corpus::{encode_sample, generate_synthetic_corpus, EncodedSample, Field, Sample, SyntheticSpec, Vocabulary};
use smn_core::gradcheck::random_batch;
use smn_core::model::network::init_params;
use smn_core::model::{model_checkpoint_bytes, ModelConfig};
use smn_core::tensor::AdamState;
use smn_core::train::{evaluate_next_token, expand_corpus, train, train_step, TrainOptions, TrainingPair};
use smn_core::Error;

fn corpus(samples: &[Sample], config: &ModelConfig) -> (Vec<EncodedSample>, ModelConfig) {
    let code = Vocabulary::build(samples, 1000, Field::Code).unwrap();
    let summary = Vocabulary::build(samples, 1000, Field::Summary).unwrap();
    let config = ModelConfig {
        code_vocab_size: code.len(),
        summary_vocab_size: summary.len(),
        ..config.clone()
    };
    let dims = config.encode_dims();
    let encoded = samples.iter().map(|s| encode_sample(s, &code, &summary, &dims)).collect();
    (encoded, config)
}

fn small_config() -> ModelConfig {
    ModelConfig {
        tdatlen: 8,
        comlen: 8,
        e_dim: 8,
        l_dim: 8,
        h: 2,
        n: 8,
        y: 12,
        batch: 16,
        projection_dim: 8,
        ..ModelConfig::default()
    }
}

fn synthetic(samples: usize, seed: u64) -> Vec<Sample> {
    let spec = SyntheticSpec {
        projects: 2,
        samples_per_project: samples / 2,
        ..SyntheticSpec::default()
    };
    generate_synthetic_corpus(&spec, seed).unwrap()
}

#[test]
fn pair_count_is_content_length_plus_one_per_sample() {
    let samples = synthetic(40, 2);
    let (encoded, _) = corpus(&samples, &small_config());
    let expected: usize = encoded.iter().map(|e| e.summary_content().len() + 1).sum();
    let pairs = expand_corpus(&encoded);
    assert_eq!(pairs.len(), expected);
    for p in &pairs {
        assert!(p.prefix_len >= 1 && p.prefix_len < 8);
        assert_ne!(p.target_id, 0);
    }
}

#[test]
fn identical_runs_give_identical_reports_and_checkpoints() {
    let samples = synthetic(30, 5);
    let (encoded, config) = corpus(&samples, &small_config());
    let (tr, va) = encoded.split_at(24);
    let opts = TrainOptions {
        max_epochs: 3,
        ..TrainOptions::default()
    };
    let a = train(tr, va, &config, &opts).unwrap();
    let b = train(tr, va, &config, &opts).unwrap();
    assert_eq!(a.reports, b.reports);
    assert_eq!(a.best_epoch, b.best_epoch);
    assert_eq!(
        model_checkpoint_bytes(&config, &a.params).unwrap(),
        model_checkpoint_bytes(&config, &b.params).unwrap()
    );
}

#[test]
fn empty_sets_are_usage_errors() {
    let samples = synthetic(4, 1);
    let (encoded, config) = corpus(&samples, &small_config());
    let opts = TrainOptions::default();
    assert!(matches!(train(&[], &encoded, &config, &opts), Err(Error::Usage(_))));
    assert!(matches!(train(&encoded, &[], &config, &opts), Err(Error::Usage(_))));
}

#[test]
fn initial_loss_is_close_to_log_vocabulary() {
    let samples = synthetic(40, 9);
    let (encoded, config) = corpus(&samples, &small_config());
    let params = init_params(&config).unwrap();
    let pairs = expand_corpus(&encoded);
    let (_, loss) = evaluate_next_token(&pairs, &params, &config).unwrap();
    let ln_v = (config.summary_vocab_size as f64).ln();
    assert!((loss - ln_v).abs() < 0.05 * ln_v, "loss {loss}, ln v {ln_v}");
}

#[test]
fn random_model_is_at_chance_on_random_targets() {
    let config = ModelConfig::toy();
    let params = init_params(&config).unwrap();
    let (samples, prefixes, targets) = random_batch(&config, 1000, 17);
    let pairs: Vec<TrainingPair> = samples
        .iter()
        .zip(&prefixes)
        .zip(&targets)
        .map(|((sample, prefix), &target_id)| TrainingPair {
            sample,
            prefix_len: prefix.iter().filter(|&&t| t != 0).count(),
            target_id,
        })
        .collect();
    let (acc, _) = evaluate_next_token(&pairs, &params, &config).unwrap();
    // Targets are uniform over v = 5 and independent of the inputs; four
    // standard deviations of the binomial proportion is about 0.05.
    assert!((acc - 0.2).abs() < 0.051, "accuracy {acc}");
}

#[test]
fn one_sample_is_memorized() {
    let sample = Sample::new("s0", "p0", "int x = 1 ; <NL> return x ;", "returns one");
    let (encoded, config) = corpus(std::slice::from_ref(&sample), &ModelConfig::toy());
    let opts = TrainOptions {
        max_epochs: 200,
        lr: 1e-2,
        ..TrainOptions::default()
    };
    let out = train(&encoded, &encoded, &config, &opts).unwrap();
    assert_eq!(out.reports[out.best_epoch].val_acc, 1.0);
    let (acc, _) = evaluate_next_token(&expand_corpus(&encoded), &out.params, &config).unwrap();
    assert_eq!(acc, 1.0);
}

#[test]
fn first_adam_steps_decrease_the_loss() {
    let mut decreasing = 0;
    for seed in 0..20u64 {
        let config = ModelConfig {
            rng_seed: seed,
            ..ModelConfig::toy()
        };
        let (samples, prefixes, targets) = random_batch(&config, 4, seed);
        let batch: Vec<TrainingPair> = samples
            .iter()
            .zip(&prefixes)
            .zip(&targets)
            .map(|((sample, prefix), &target_id)| TrainingPair {
                sample,
                prefix_len: prefix.iter().filter(|&&t| t != 0).count(),
                target_id: target_id.max(2),
            })
            .collect();
        let mut params = init_params(&config).unwrap();
        let mut adam = AdamState::new(&params, 1e-3);
        let losses: Vec<f64> = (0..6)
            .map(|_| train_step(&mut params, &mut adam, &config, &batch, None).unwrap())
            .collect();
        if losses.windows(2).all(|w| w[1] < w[0]) {
            decreasing += 1;
        }
    }
    assert!(decreasing >= 19, "only {decreasing} of 20 seeds decreased");
}

proptest! {
    #[test]
    fn shuffling_keeps_the_pair_multiset(seed in any::<u64>(), corpus_seed in 0u64..4) {
        let samples = synthetic(10, corpus_seed);
        let (encoded, _) = corpus(&samples, &small_config());
        let pairs = expand_corpus(&encoded);
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let key = |p: &TrainingPair| (p.sample.sample_id.clone(), p.prefix_len, p.target_id);
        let mut a: Vec<_> = pairs.iter().map(key).collect();
        let mut b: Vec<_> = shuffled.iter().map(key).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }
}
