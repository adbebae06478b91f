//! Shared fixtures for the benchmarks.

use smn_core::corpus::{encode_sample, generate_synthetic_corpus, EncodedSample, Field, SyntheticSpec, Vocabulary};
use smn_core::model::ModelConfig;

/// A synthetic corpus encoded for `base`, with vocabulary sizes filled in.
pub fn encoded_corpus(base: &ModelConfig, samples: usize) -> (Vec<EncodedSample>, ModelConfig) {
    let spec = SyntheticSpec {
        projects: 4,
        samples_per_project: samples.div_ceil(4),
        ..SyntheticSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, 1).expect("default spec is valid");
    let code = Vocabulary::build(&corpus, usize::MAX, Field::Code).expect("vocabulary");
    let summary = Vocabulary::build(&corpus, usize::MAX, Field::Summary).expect("vocabulary");
    let config = ModelConfig {
        code_vocab_size: code.len(),
        summary_vocab_size: summary.len(),
        ..base.clone()
    };
    let dims = config.encode_dims();
    let encoded = corpus
        .iter()
        .take(samples)
        .map(|s| encode_sample(s, &code, &summary, &dims))
        .collect();
    (encoded, config)
}

/// Desk-scale dimensions used across the benchmarks.
pub fn bench_config() -> ModelConfig {
    ModelConfig {
        tdatlen: 40,
        comlen: 13,
        e_dim: 32,
        l_dim: 32,
        h: 3,
        n: 8,
        y: 12,
        batch: 32,
        projection_dim: 32,
        ..ModelConfig::default()
    }
}
