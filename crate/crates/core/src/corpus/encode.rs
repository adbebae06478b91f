use serde::{Deserialize, Serialize};

use crate::corpus::statements::{split_statements, StatementMatrix};
use crate::corpus::vocab::{Vocabulary, BOS, EOS, PAD};
use crate::corpus::Sample;
use crate::error::{Error, Result};

/// Input shapes shared by the encoder and the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeDims {
    pub tdatlen: usize,
    pub comlen: usize,
    /// Maximum number of statements.
    pub n: usize,
    /// Maximum tokens per statement.
    pub y: usize,
}

impl EncodeDims {
    pub fn validate(&self) -> Result<()> {
        if self.tdatlen == 0 || self.n == 0 || self.y == 0 {
            return Err(Error::usage("tdatlen, n and y must be positive"));
        }
        if self.comlen < 2 {
            return Err(Error::usage("comlen must leave room for <s> and </s>"));
        }
        Ok(())
    }
}

/// A sample in the fixed shapes the network consumes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSample {
    pub sample_id: String,
    /// Exactly `tdatlen` ids; `<NL>` markers count toward the length.
    pub code_ids: Vec<usize>,
    pub statements: StatementMatrix,
    /// Exactly `comlen` ids: `<s>`, content, `</s>`, padding.
    pub summary_ids: Vec<usize>,
}

impl EncodedSample {
    /// Summary ids between the frame tokens.
    pub fn summary_content(&self) -> &[usize] {
        let end = self
            .summary_ids
            .iter()
            .position(|&id| id == EOS)
            .unwrap_or(self.summary_ids.len());
        &self.summary_ids[1..end]
    }
}

pub fn encode_sample(
    sample: &Sample,
    code_vocab: &Vocabulary,
    summary_vocab: &Vocabulary,
    dims: &EncodeDims,
) -> EncodedSample {
    let mut code_ids: Vec<usize> = sample
        .code_tokens
        .iter()
        .take(dims.tdatlen)
        .map(|t| code_vocab.id(t))
        .collect();
    code_ids.resize(dims.tdatlen, PAD);

    let content = dims.comlen.saturating_sub(2);
    let mut summary_ids = Vec::with_capacity(dims.comlen);
    summary_ids.push(BOS);
    summary_ids.extend(
        sample
            .summary_tokens
            .iter()
            .take(content)
            .map(|t| summary_vocab.id(t)),
    );
    summary_ids.push(EOS);
    summary_ids.resize(dims.comlen, PAD);

    EncodedSample {
        sample_id: sample.sample_id.clone(),
        code_ids,
        statements: split_statements(&sample.code_tokens, code_vocab, dims.n, dims.y),
        summary_ids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocabs(s: &Sample) -> (Vocabulary, Vocabulary) {
        (
            Vocabulary::from_streams([s.code_tokens.as_slice()], 1000).unwrap(),
            Vocabulary::from_streams([s.summary_tokens.as_slice()], 1000).unwrap(),
        )
    }

    const DIMS: EncodeDims = EncodeDims {
        tdatlen: 200,
        comlen: 13,
        n: 70,
        y: 30,
    };

    #[test]
    fn short_summary_is_framed_and_padded() {
        let s = Sample::new("a", "p", "return x", "returns x");
        let (cv, sv) = vocabs(&s);
        let e = encode_sample(&s, &cv, &sv, &DIMS);
        let mut expect = vec![BOS, sv.id("returns"), sv.id("x"), EOS];
        expect.resize(13, PAD);
        assert_eq!(e.summary_ids, expect);
        assert_eq!(e.summary_content(), &[sv.id("returns"), sv.id("x")]);
    }

    #[test]
    fn long_code_keeps_head() {
        let code: Vec<String> = (0..300).map(|i| format!("t{i}")).collect();
        let s = Sample::new("a", "p", &code.join(" "), "x");
        let (cv, sv) = vocabs(&s);
        let e = encode_sample(&s, &cv, &sv, &DIMS);
        assert_eq!(e.code_ids.len(), 200);
        assert_eq!(cv.decode(&e.code_ids), code[..200]);
    }

    #[test]
    fn long_summary_keeps_eos() {
        let words: Vec<String> = (0..14).map(|i| format!("w{i}")).collect();
        let s = Sample::new("a", "p", "x", &words.join(" "));
        let (cv, sv) = vocabs(&s);
        let e = encode_sample(&s, &cv, &sv, &DIMS);
        assert_eq!(e.summary_ids.len(), 13);
        assert_eq!(e.summary_ids[0], BOS);
        assert_eq!(e.summary_ids[12], EOS);
        assert_eq!(sv.decode(e.summary_content()), words[..11]);
    }

    #[test]
    fn nl_counts_toward_tdatlen() {
        let s = Sample::new("a", "p", "a <NL> b <NL> c", "x");
        let (cv, sv) = vocabs(&s);
        let dims = EncodeDims { tdatlen: 3, ..DIMS };
        let e = encode_sample(&s, &cv, &sv, &dims);
        assert_eq!(cv.decode(&e.code_ids), ["a", "<NL>", "b"]);
        assert_eq!(e.statements.statement_count, 3);
    }
}
