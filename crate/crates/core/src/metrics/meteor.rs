//! Exact-match METEOR.
//!
//! ```text
//! P = m/|pred|, R = m/|ref|, Fmean = 10PR / (R + 9P)
//! penalty = 0.5 * (chunks/m)^3, score = Fmean * (1 - penalty)
//! ```
//!
//! The alignment first maximizes the number of matched unigrams, then
//! minimizes the number of chunks (runs contiguous and in order on both
//! sides).

use std::collections::HashMap;

use crate::metrics::canonicalize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

struct Search<'a> {
    pred: &'a [usize],
    /// `(position in the reference, word)` for every matchable reference
    /// token; the index in this list is its bit in the `used` mask.
    reference: &'a [(usize, usize)],
    /// Occurrences of each word in `pred` that must stay unmatched.
    spare: Vec<usize>,
    memo: HashMap<(usize, u128, usize, Vec<usize>), usize>,
}

impl Search<'_> {
    /// Fewest chunks for `pred[i..]`, with `used` ref positions taken,
    /// `prev` = 1 + ref index matched by `pred[i-1]` (0 if unmatched), and
    /// `skipped[w]` unmatched occurrences of word `w` so far.
    fn best(&mut self, i: usize, used: u128, prev: usize, skipped: &mut Vec<usize>) -> usize {
        if i == self.pred.len() {
            return 0;
        }
        let key = (i, used, prev, skipped.clone());
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let w = self.pred[i];
        let mut best = usize::MAX;
        if skipped[w] < self.spare[w] {
            skipped[w] += 1;
            best = self.best(i + 1, used, 0, skipped);
            skipped[w] -= 1;
        }
        for (bit, &(j, r)) in self.reference.iter().enumerate() {
            if r != w || used & (1 << bit) != 0 {
                continue;
            }
            let opens = usize::from(!(prev != 0 && prev == j));
            let rest = self.best(i + 1, used | (1 << bit), j + 1, skipped);
            if rest != usize::MAX {
                best = best.min(rest + opens);
            }
        }
        self.memo.insert(key, best);
        best
    }
}

/// Maximum matches, then minimum chunks, over exact-match alignments.
pub fn meteor_alignment<S: AsRef<str>>(pred: &[S], reference: &[S]) -> Alignment {
    let pred = canonicalize(pred);
    let reference = canonicalize(reference);
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut p: Vec<usize> = Vec::with_capacity(pred.len());
    let mut r: Vec<usize> = Vec::with_capacity(reference.len());
    for (src, dst) in [(&pred, &mut p), (&reference, &mut r)] {
        for t in src.iter() {
            let n = ids.len();
            dst.push(*ids.entry(t.as_str()).or_insert(n));
        }
    }
    let words = ids.len();
    let mut pc = vec![0usize; words];
    let mut rc = vec![0usize; words];
    p.iter().for_each(|&w| pc[w] += 1);
    r.iter().for_each(|&w| rc[w] += 1);
    let matches: usize = (0..words).map(|w| pc[w].min(rc[w])).sum();
    if matches == 0 {
        return Alignment { matches: 0, chunks: 0 };
    }
    let mut spare = vec![0usize; words];
    for w in 0..words {
        spare[w] = pc[w].saturating_sub(rc[w]);
    }
    let cand: Vec<(usize, usize)> = r
        .iter()
        .enumerate()
        .filter(|&(_, &w)| pc[w] > 0)
        .map(|(j, &w)| (j, w))
        .collect();
    if cand.len() > 128 {
        return greedy_alignment(&p, &r, matches);
    }
    let mut s = Search {
        pred: &p,
        reference: &cand,
        spare,
        memo: HashMap::new(),
    };
    let chunks = s.best(0, 0, 0, &mut vec![0; words]);
    Alignment { matches, chunks }
}

/// Left-to-right matching that prefers extending the current chunk; used
/// only beyond 128 matchable reference tokens. Keeps the maximum match count
/// but may overcount chunks.
fn greedy_alignment(p: &[usize], r: &[usize], matches: usize) -> Alignment {
    let mut used = vec![false; r.len()];
    let mut prev: Option<usize> = None;
    let mut chunks = 0;
    for &w in p {
        let pick = prev
            .map(|j| j + 1)
            .filter(|&j| j < r.len() && !used[j] && r[j] == w)
            .or_else(|| (0..r.len()).find(|&j| !used[j] && r[j] == w));
        match pick {
            Some(j) => {
                if j == 0 || prev != Some(j - 1) {
                    chunks += 1;
                }
                used[j] = true;
                prev = Some(j);
            }
            None => prev = None,
        }
    }
    Alignment { matches, chunks }
}

/// Score from alignment statistics and sentence lengths.
pub fn meteor_from(alignment: Alignment, pred_len: usize, ref_len: usize) -> f64 {
    let m = alignment.matches as f64;
    if alignment.matches == 0 {
        return 0.0;
    }
    let p = m / pred_len as f64;
    let r = m / ref_len as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (alignment.chunks as f64 / m).powi(3);
    fmean * (1.0 - penalty)
}

/// Sentence METEOR in `[0, 1]`; an empty prediction scores 0.
pub fn meteor<S: AsRef<str>>(pred: &[S], reference: &[S]) -> f64 {
    let a = meteor_alignment(pred, reference);
    meteor_from(a, canonicalize(pred).len(), canonicalize(reference).len())
}
