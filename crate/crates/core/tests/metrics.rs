use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use smn_core::metrics::{bleu_corpus, meteor, paired_t_test, student_t_two_tailed};

/// Every partial injective matching of equal tokens; returns the maximum
/// match count and, among those, the fewest chunks.
fn brute_force(pred: &[&str], reference: &[&str]) -> (usize, usize) {
    fn walk(i: usize, pred: &[&str], reference: &[&str], used: &mut Vec<bool>, pairs: &mut Vec<(usize, usize)>, best: &mut (usize, usize)) {
        if i == pred.len() {
            let m = pairs.len();
            let mut chunks = 0;
            for (k, &(pi, rj)) in pairs.iter().enumerate() {
                let continues = k > 0 && pairs[k - 1].0 + 1 == pi && pairs[k - 1].1 + 1 == rj;
                if !continues {
                    chunks += 1;
                }
            }
            if m > best.0 || (m == best.0 && chunks < best.1) {
                *best = (m, chunks);
            }
            return;
        }
        walk(i + 1, pred, reference, used, pairs, best);
        for j in 0..reference.len() {
            if !used[j] && reference[j] == pred[i] {
                used[j] = true;
                pairs.push((i, j));
                walk(i + 1, pred, reference, used, pairs, best);
                pairs.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, usize::MAX);
    walk(0, pred, reference, &mut vec![false; reference.len()], &mut Vec::new(), &mut best);
    best
}

fn oracle_score(pred: &[&str], reference: &[&str]) -> f64 {
    let (m, chunks) = brute_force(pred, reference);
    if m == 0 {
        return 0.0;
    }
    let (m, chunks) = (m as f64, chunks as f64);
    let p = m / pred.len() as f64;
    let r = m / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    fmean * (1.0 - 0.5 * (chunks / m).powi(3))
}

#[test]
fn meteor_matches_brute_force_aligner() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let alphabet = ["a", "b", "c", "d"];
    for _ in 0..200 {
        let pl = rng.random_range(1..=6);
        let rl = rng.random_range(1..=6);
        let pred: Vec<&str> = (0..pl).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        let reference: Vec<&str> = (0..rl).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        let got = meteor(&pred, &reference);
        let want = oracle_score(&pred, &reference);
        assert_eq!(got.to_bits(), want.to_bits(), "{pred:?} / {reference:?}: {got} vs {want}");
    }
}

#[test]
fn t_distribution_matches_statrs() {
    for df in [1.0, 2.0, 4.0, 10.0, 30.0, 200.0] {
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        for t in [0.0, 0.3, 1.0, 2.228, 4.2426, 9.0] {
            let want = 2.0 * (1.0 - dist.cdf(t));
            let got = student_t_two_tailed(t, df);
            assert!((got - want).abs() < 1e-9, "df {df} t {t}: {got} vs {want}");
        }
    }
}

#[test]
fn t_test_table_values() {
    let r = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
    assert!((r.t - 4.2426).abs() < 1e-4);
    assert!((r.p - 0.0132).abs() < 5e-4);
    assert!((student_t_two_tailed(2.228, 10.0) - 0.050).abs() < 1e-3);
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["x", "y", "z", "w", "v"]), 0..8)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #[test]
    fn meteor_is_bounded(p in sentence(), r in sentence()) {
        let s = meteor(&p, &r);
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn bleu_ignores_corpus_order(pairs in prop::collection::vec((sentence(), sentence()), 1..6), seed in any::<u64>()) {
        let mut shuffled = pairs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            let j = rng.random_range(0..=i);
            shuffled.swap(i, j);
        }
        let a = bleu_corpus(&pairs).unwrap();
        let b = bleu_corpus(&shuffled).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn t_test_antisymmetry(a in prop::collection::vec(0.0f64..1.0, 2..12), shift in prop::collection::vec(-0.5f64..0.5, 12)) {
        let b: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x + s).collect();
        let x = paired_t_test(&a, &b).unwrap();
        let y = paired_t_test(&b, &a).unwrap();
        prop_assert_eq!(x.t, -y.t);
        prop_assert_eq!(x.p, y.p);
        prop_assert_eq!(paired_t_test(&a, &a).unwrap().p, 1.0);
    }
}
