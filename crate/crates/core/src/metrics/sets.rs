//! Per-sample scoring and the difference / same / improved set analyses.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{bleu_corpus, canonicalize, meteor};

/// `(sample_id, tokens)` in file order.
pub type TokenRecords = [(String, Vec<String>)];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoredSample {
    pub sample_id: String,
    pub reference: Vec<String>,
    pub predicted: Vec<String>,
    pub meteor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoredCorpus {
    pub samples: Vec<ScoredSample>,
    pub corpus_bleu: f64,
    pub mean_meteor: f64,
}

impl ScoredCorpus {
    pub fn meteors(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.meteor).collect()
    }
}

fn index<'a>(records: &'a TokenRecords, what: &'static str) -> Result<HashMap<&'a str, &'a [String]>> {
    let mut out = HashMap::with_capacity(records.len());
    for (id, tokens) in records {
        if out.insert(id.as_str(), tokens.as_slice()).is_some() {
            return Err(Error::format(what, format!("duplicate sample id `{id}`")));
        }
    }
    Ok(out)
}

/// Checks that both record sets cover the same ids.
pub fn align(first: &TokenRecords, second: &TokenRecords) -> Result<()> {
    let a: BTreeSet<&str> = first.iter().map(|(id, _)| id.as_str()).collect();
    let b: BTreeSet<&str> = second.iter().map(|(id, _)| id.as_str()).collect();
    if a.len() != first.len() || b.len() != second.len() {
        return Err(Error::format("sample ids", "duplicate sample id"));
    }
    if a != b {
        return Err(Error::Alignment {
            missing_in_first: b.difference(&a).map(|s| s.to_string()).collect(),
            missing_in_second: a.difference(&b).map(|s| s.to_string()).collect(),
        });
    }
    Ok(())
}

/// Scores predictions against references, in reference order.
pub fn score_corpus(references: &TokenRecords, predictions: &TokenRecords) -> Result<ScoredCorpus> {
    align(references, predictions)?;
    let preds = index(predictions, "predictions")?;
    let samples: Vec<ScoredSample> = references
        .iter()
        .map(|(id, reference)| {
            let predicted = canonicalize(preds[id.as_str()]);
            let reference = canonicalize(reference);
            ScoredSample {
                sample_id: id.clone(),
                meteor: meteor(&predicted, &reference),
                reference,
                predicted,
            }
        })
        .collect();
    let pairs: Vec<(Vec<String>, Vec<String>)> = samples
        .iter()
        .map(|s| (s.predicted.clone(), s.reference.clone()))
        .collect();
    let corpus_bleu = bleu_corpus(&pairs)?;
    let mean_meteor = samples.iter().map(|s| s.meteor).sum::<f64>() / samples.len() as f64;
    Ok(ScoredCorpus {
        samples,
        corpus_bleu,
        mean_meteor,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SystemScores {
    pub meteor: f64,
    pub bleu: f64,
}

fn subset_scores(c: &ScoredCorpus, ids: &BTreeSet<&str>) -> Option<SystemScores> {
    let picked: Vec<&ScoredSample> = c
        .samples
        .iter()
        .filter(|s| ids.contains(s.sample_id.as_str()))
        .collect();
    if picked.is_empty() {
        return None;
    }
    let pairs: Vec<(Vec<String>, Vec<String>)> = picked
        .iter()
        .map(|s| (s.predicted.clone(), s.reference.clone()))
        .collect();
    Some(SystemScores {
        meteor: picked.iter().map(|s| s.meteor).sum::<f64>() / picked.len() as f64,
        bleu: bleu_corpus(&pairs).ok()?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SetPartition {
    pub difference_ids: Vec<String>,
    pub same_ids: Vec<String>,
    /// `|difference| / total * 100`.
    pub difference_pct: f64,
    /// Scores on the same set (identical for both systems).
    pub same: Option<SystemScores>,
    pub difference_a: Option<SystemScores>,
    pub difference_b: Option<SystemScores>,
}

/// Splits samples by whether the two systems' canonical predictions differ.
pub fn difference_set(preds_a: &TokenRecords, preds_b: &TokenRecords, refs: &TokenRecords) -> Result<SetPartition> {
    align(preds_a, preds_b)?;
    align(refs, preds_a)?;
    let a = score_corpus(refs, preds_a)?;
    let b = score_corpus(refs, preds_b)?;
    let mut difference_ids = Vec::new();
    let mut same_ids = Vec::new();
    for (sa, sb) in a.samples.iter().zip(&b.samples) {
        if sa.predicted == sb.predicted {
            same_ids.push(sa.sample_id.clone());
        } else {
            difference_ids.push(sa.sample_id.clone());
        }
    }
    let diff: BTreeSet<&str> = difference_ids.iter().map(String::as_str).collect();
    let same: BTreeSet<&str> = same_ids.iter().map(String::as_str).collect();
    Ok(SetPartition {
        difference_pct: 100.0 * difference_ids.len() as f64 / refs.len() as f64,
        same: subset_scores(&a, &same),
        difference_a: subset_scores(&a, &diff),
        difference_b: subset_scores(&b, &diff),
        difference_ids,
        same_ids,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImprovedSet {
    pub ids: Vec<String>,
    pub size_pct: f64,
    pub mean_a: f64,
    pub mean_b: f64,
}

/// Samples where system A's METEOR is strictly above system B's.
pub fn improved_set(ids: &[String], meteor_a: &[f64], meteor_b: &[f64]) -> Result<ImprovedSet> {
    if ids.len() != meteor_a.len() || ids.len() != meteor_b.len() {
        return Err(Error::dim("improved_set", &[ids.len(), meteor_a.len()], &[meteor_b.len()]));
    }
    let picked: Vec<usize> = (0..ids.len()).filter(|&i| meteor_a[i] > meteor_b[i]).collect();
    let mean = |v: &[f64]| {
        if picked.is_empty() {
            0.0
        } else {
            picked.iter().map(|&i| v[i]).sum::<f64>() / picked.len() as f64
        }
    };
    Ok(ImprovedSet {
        ids: picked.iter().map(|&i| ids[i].clone()).collect(),
        size_pct: if ids.is_empty() {
            0.0
        } else {
            100.0 * picked.len() as f64 / ids.len() as f64
        },
        mean_a: mean(meteor_a),
        mean_b: mean(meteor_b),
    })
}
