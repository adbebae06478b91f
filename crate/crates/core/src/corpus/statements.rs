use crate::corpus::vocab::{Vocabulary, NL, PAD};

/// Code as an `n x Y` grid of statement token ids.
///
/// Row `i < statement_count` holds `lengths[i]` ids followed by padding; rows
/// at or beyond `statement_count` are all padding with length 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StatementMatrix {
    pub ids: Vec<Vec<usize>>,
    pub statement_count: usize,
    pub lengths: Vec<usize>,
}

impl StatementMatrix {
    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn width(&self) -> usize {
        self.ids.first().map_or(0, Vec::len)
    }

    /// The non-padding ids of statement `i`.
    pub fn statement(&self, i: usize) -> &[usize] {
        &self.ids[i][..self.lengths[i]]
    }
}

/// Splits a token stream at `<NL>`, dropping empty segments. Text after the
/// last marker is a statement of its own.
pub fn statement_segments(code_tokens: &[String]) -> Vec<&[String]> {
    code_tokens
        .split(|t| t == NL)
        .filter(|seg| !seg.is_empty())
        .collect()
}

pub fn count_statements(code_tokens: &[String]) -> usize {
    statement_segments(code_tokens).len()
}

/// Partitions code into at most `n` statements of at most `y` tokens each,
/// keeping the head of the function and the head of each statement.
pub fn split_statements(
    code_tokens: &[String],
    vocab: &Vocabulary,
    n: usize,
    y: usize,
) -> StatementMatrix {
    let mut ids = vec![vec![PAD; y]; n];
    let mut lengths = vec![0; n];
    let segments = statement_segments(code_tokens);
    let count = segments.len().min(n);
    for (row, seg) in segments.into_iter().take(n).enumerate() {
        let kept = &seg[..seg.len().min(y)];
        for (slot, tok) in ids[row].iter_mut().zip(kept) {
            *slot = vocab.id(tok);
        }
        lengths[row] = kept.len();
    }
    StatementMatrix {
        ids,
        statement_count: count,
        lengths,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn vocab_for(s: &[String]) -> Vocabulary {
        Vocabulary::from_streams([s], 1000).unwrap()
    }

    #[test]
    fn two_statements() {
        let code = toks("a = 1 ; <NL> return a <NL>");
        let v = vocab_for(&code);
        let m = split_statements(&code, &v, 70, 30);
        assert_eq!(m.statement_count, 2);
        assert_eq!(v.decode(m.statement(0)), toks("a = 1 ;"));
        assert_eq!(v.decode(m.statement(1)), toks("return a"));
        assert_eq!(m.rows(), 70);
        assert_eq!(m.width(), 30);
    }

    #[test]
    fn no_delimiter_is_one_statement() {
        let code = toks("return x + y");
        let v = vocab_for(&code);
        let m = split_statements(&code, &v, 5, 3);
        assert_eq!(m.statement_count, 1);
        assert_eq!(m.lengths[0], 3);
        assert_eq!(v.decode(m.statement(0)), toks("return x +"));
    }

    #[test]
    fn keeps_first_n_statements() {
        let mut code = Vec::new();
        for i in 0..75 {
            code.push(format!("s{i}"));
            code.push(NL.to_string());
        }
        let v = vocab_for(&code);
        let m = split_statements(&code, &v, 70, 30);
        assert_eq!(m.statement_count, 70);
        assert_eq!(v.decode(m.statement(69)), ["s69"]);
    }

    #[test]
    fn empty_segments_dropped_and_trailing_kept() {
        let code = toks("<NL> <NL> a <NL> <NL> b c");
        let v = vocab_for(&code);
        let m = split_statements(&code, &v, 4, 4);
        assert_eq!(m.statement_count, 2);
        assert_eq!(m.lengths, [1, 2, 0, 0]);
        let only_markers = toks("<NL> <NL>");
        assert_eq!(split_statements(&only_markers, &v, 4, 4).statement_count, 0);
    }

    #[test]
    fn unknown_tokens_become_unk() {
        let code = toks("known <NL> unknown");
        let v = vocab_for(&toks("known"));
        let m = split_statements(&code, &v, 2, 2);
        assert_eq!(m.statement(1), [crate::corpus::vocab::UNK]);
    }

    proptest! {
        #[test]
        fn rows_never_hold_nl_and_pad_only_trails(
            words in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "<NL>"]), 0..60),
            n in 1usize..8,
            y in 1usize..6,
        ) {
            let code: Vec<String> = words.iter().map(|s| s.to_string()).collect();
            let v = vocab_for(&toks("a b c <NL>"));
            let nl = v.id(NL);
            let m = split_statements(&code, &v, n, y);
            prop_assert!(m.statement_count <= n);
            for (i, row) in m.ids.iter().enumerate() {
                prop_assert!(!row.contains(&nl));
                let len = m.lengths[i];
                prop_assert!(len <= y);
                prop_assert!(row[..len].iter().all(|&id| id != PAD));
                prop_assert!(row[len..].iter().all(|&id| id == PAD));
                if i >= m.statement_count {
                    prop_assert_eq!(len, 0);
                } else {
                    prop_assert!(len > 0);
                }
            }
        }
    }
}
