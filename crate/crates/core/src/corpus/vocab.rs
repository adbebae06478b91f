use std::collections::HashMap;
use std::fmt::Write as _;

use crate::corpus::Sample;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<PAD>", "<s>", "</s>", "<UNK>"];
/// Statement delimiter in code token streams.
pub const NL: &str = "<NL>";

/// Which side of a sample a vocabulary covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Code,
    Summary,
}

/// Token/id bijection. Ids `0..4` are reserved; the rest are ordered by
/// descending corpus frequency, ties broken lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    to_id: HashMap<String, usize>,
    tokens: Vec<String>,
    pub max_size: usize,
}

pub fn is_reserved(token: &str) -> bool {
    RESERVED.contains(&token)
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, max_size: usize) -> Self {
        let to_id = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            to_id,
            tokens,
            max_size,
        }
    }

    pub fn build(samples: &[Sample], max_size: usize, field: Field) -> Result<Self> {
        let streams = samples.iter().map(|s| match field {
            Field::Code => s.code_tokens.as_slice(),
            Field::Summary => s.summary_tokens.as_slice(),
        });
        Self::from_streams(streams, max_size)
    }

    pub fn from_streams<'a>(
        streams: impl IntoIterator<Item = &'a [String]>,
        max_size: usize,
    ) -> Result<Self> {
        if max_size <= RESERVED.len() {
            return Err(Error::usage(format!(
                "vocabulary max_size must exceed {}, got {max_size}",
                RESERVED.len()
            )));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut seen_any = false;
        for stream in streams {
            for tok in stream {
                seen_any = true;
                if !is_reserved(tok) {
                    *counts.entry(tok.as_str()).or_default() += 1;
                }
            }
        }
        if !seen_any {
            return Err(Error::usage("cannot build a vocabulary from an empty corpus"));
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(
            ranked
                .into_iter()
                .take(max_size - RESERVED.len())
                .map(|(t, _)| t.to_string()),
        );
        Ok(Self::from_tokens(tokens, max_size))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or `<UNK>`.
    pub fn id(&self, token: &str) -> usize {
        self.to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(RESERVED[UNK]).to_string())
            .collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; line number is the id.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            let _ = writeln!(out, "{t}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < RESERVED.len()
            || tokens[..RESERVED.len()]
                .iter()
                .zip(RESERVED)
                .any(|(a, b)| a != b)
        {
            return Err(Error::format(
                "vocabulary file",
                "first four lines must be <PAD>, <s>, </s>, <UNK>",
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &tokens {
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(Error::format("vocabulary file", format!("bad token `{t}`")));
            }
            if !seen.insert(t.as_str()) {
                return Err(Error::format("vocabulary file", format!("duplicate token `{t}`")));
            }
        }
        let n = tokens.len();
        Ok(Self::from_tokens(tokens, n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn frequency_ordering() {
        let s = stream("a a b");
        let v = Vocabulary::from_streams([s.as_slice()], 10).unwrap();
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), 5);
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn reserved_ids_are_fixed() {
        let s = stream("x y z");
        let v = Vocabulary::from_streams([s.as_slice()], 5).unwrap();
        for (i, r) in RESERVED.iter().enumerate() {
            assert_eq!(v.id(r), i);
            assert_eq!(v.token(i), Some(*r));
        }
    }

    #[test]
    fn size_cap_maps_rest_to_unk() {
        let s = stream("t0 t1 t2 t3 t4 t5 t6 t7 t8 t9");
        let v = Vocabulary::from_streams([s.as_slice()], 6).unwrap();
        assert_eq!(v.len(), 6);
        // all ties: lexicographic
        assert_eq!(v.id("t0"), 4);
        assert_eq!(v.id("t1"), 5);
        assert_eq!(v.id("t2"), UNK);
    }

    #[test]
    fn ties_break_lexicographically() {
        let s = stream("b a c c");
        let v = Vocabulary::from_streams([s.as_slice()], 10).unwrap();
        assert_eq!(v.tokens()[4..], ["c", "a", "b"]);
    }

    #[test]
    fn empty_corpus_and_tiny_cap_are_errors() {
        let empty: Vec<&[String]> = vec![];
        assert!(Vocabulary::from_streams(empty, 10).is_err());
        let s = stream("a");
        assert!(Vocabulary::from_streams([s.as_slice()], 4).is_err());
    }

    #[test]
    fn file_round_trip() {
        let s = stream("q q r <NL> s");
        let v = Vocabulary::from_streams([s.as_slice()], 20).unwrap();
        let text = v.to_file_string();
        assert!(text.starts_with("<PAD>\n<s>\n</s>\n<UNK>\n"));
        let w = Vocabulary::parse(&text).unwrap();
        assert_eq!(v.tokens(), w.tokens());
        assert!(Vocabulary::parse("a\nb\n").is_err());
    }

    #[test]
    fn encode_decode_round_trips_known_tokens() {
        let s = stream("if x return y");
        let v = Vocabulary::from_streams([s.as_slice()], 20).unwrap();
        assert_eq!(v.decode(&v.encode(&s)), s);
    }
}
