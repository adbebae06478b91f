use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::metrics::canonicalize;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// Corpus BLEU-4 on a 0..100 scale: clipped n-gram precisions for n = 1..4,
/// uniform geometric mean, brevity penalty, no smoothing. Pairs are
/// `(prediction, reference)`.
pub fn bleu_corpus<S: AsRef<str>>(pairs: &[(Vec<S>, Vec<S>)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::usage("BLEU needs at least one sentence pair"));
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (pred, reference) in pairs {
        let pred = canonicalize(pred);
        let reference = canonicalize(reference);
        hyp_len += pred.len();
        ref_len += reference.len();
        for n in 1..=4 {
            let ref_counts = ngram_counts(&reference, n);
            for (gram, count) in ngram_counts(&pred, n) {
                matched[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
                total[n - 1] += count;
            }
        }
    }
    if matched.contains(&0) {
        return Ok(0.0);
    }
    let log_mean: f64 = (0..4)
        .map(|i| (matched[i] as f64 / total[i] as f64).ln())
        .sum::<f64>()
        / 4.0;
    let bp = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(100.0 * bp * log_mean.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tokenize;

    fn pair(p: &str, r: &str) -> (Vec<String>, Vec<String>) {
        (tokenize(p), tokenize(r))
    }

    #[test]
    fn hand_computed_example() {
        let b = bleu_corpus(&[pair("the cat sat on mat", "the cat sat on the mat")]).unwrap();
        let expect = 100.0 * (-0.2f64).exp() * 0.25f64.powf(0.25);
        assert!((b - expect).abs() < 1e-9);
        assert!((b - 57.89).abs() < 0.01);
    }

    #[test]
    fn perfect_and_disjoint() {
        let same = pair("returns the sum of values", "returns the sum of values");
        assert!((bleu_corpus(&[same.clone(), same]).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(bleu_corpus(&[pair("a b c d", "w x y z")]).unwrap(), 0.0);
    }

    #[test]
    fn case_is_ignored() {
        assert!((bleu_corpus(&[pair("Gets The Name Now", "gets the name now")]).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn empty_corpus_is_usage_error() {
        let empty: Vec<(Vec<String>, Vec<String>)> = Vec::new();
        assert!(matches!(bleu_corpus(&empty), Err(Error::Usage(_))));
    }

    #[test]
    fn empty_prediction_scores_zero() {
        assert_eq!(bleu_corpus(&[pair("", "a b c d")]).unwrap(), 0.0);
    }
}
