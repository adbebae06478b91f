//! Summary quality metrics and the two-system comparisons built on them.

pub mod bleu;
pub mod meteor;
pub mod report;
pub mod sets;
pub mod ttest;

pub use bleu::bleu_corpus;
pub use meteor::{meteor, meteor_alignment, Alignment};
pub use report::{format_table, ReportRow};
pub use sets::{
    align, difference_set, improved_set, score_corpus, ImprovedSet, ScoredCorpus, ScoredSample,
    SetPartition, SystemScores,
};
pub use ttest::{paired_t_test, regularized_incomplete_beta, student_t_two_tailed, TTest};

/// Lowercases and re-splits on whitespace.
pub fn canonicalize<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens
        .iter()
        .flat_map(|t| {
            t.as_ref()
                .split_whitespace()
                .map(str::to_lowercase)
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Whitespace tokens of `text`, lowercased.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}
