//! Greedy decoding for single models and mean-probability ensembles.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::corpus::vocab::{Vocabulary, BOS, EOS, PAD, RESERVED};
use crate::corpus::{encode_sample, EncodedSample, Sample};
use crate::error::{Error, Result};
use crate::model::network::{forward_batch, DecoderInput};
use crate::model::ModelConfig;
use crate::tensor::ParameterSet;

/// Upper bound on generated tokens per summary.
pub const MAX_TOKENS: usize = 12;

/// A trained model: weights and the configuration they belong to.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub predicted_ids: Vec<usize>,
    /// Ensemble distribution at each step, kept only on request.
    pub step_dists: Option<Vec<Vec<f64>>>,
}

/// Arithmetic mean of equal-length distributions.
pub fn ensemble_distribution(dists: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = dists
        .first()
        .ok_or_else(|| Error::usage("ensemble needs at least one distribution"))?;
    let mut out = first.clone();
    // Running mean, so that identical members reproduce their input exactly.
    for (k, d) in dists.iter().enumerate().skip(1) {
        if d.len() != out.len() {
            return Err(Error::dim("ensemble_distribution", &[out.len()], &[d.len()]));
        }
        let w = (k + 1) as f64;
        out.iter_mut().zip(d).for_each(|(o, v)| *o += (v - *o) / w);
    }
    Ok(out)
}

/// Checks the ensemble preconditions and returns the shared comlen.
pub fn check_ensemble(models: &[Model]) -> Result<usize> {
    let first = models
        .first()
        .ok_or_else(|| Error::usage("decoding needs at least one model"))?;
    for m in models {
        if m.config.summary_vocab_size != first.config.summary_vocab_size {
            return Err(Error::usage(format!(
                "ensemble members disagree on summary vocabulary size ({} vs {})",
                first.config.summary_vocab_size, m.config.summary_vocab_size
            )));
        }
        if m.config.comlen != first.config.comlen {
            return Err(Error::usage(format!(
                "ensemble members disagree on comlen ({} vs {})",
                first.config.comlen, m.config.comlen
            )));
        }
    }
    Ok(first.config.comlen)
}

/// Argmax over the ids decoding may emit: `</s>` and every non-reserved
/// token. Lowest id wins ties.
pub fn decode_argmax(dist: &[f64]) -> usize {
    let mut best = EOS;
    for (i, &p) in dist.iter().enumerate().skip(RESERVED.len()) {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

fn token_budget(comlen: usize) -> usize {
    MAX_TOKENS.min(comlen.saturating_sub(1))
}

/// Decodes every sample in lockstep; each step runs one batched forward per
/// model over the samples still generating. `encoded[k]` holds the samples
/// encoded for model `k` (members may use different input shapes).
pub fn decode_members(models: &[Model], encoded: &[&[EncodedSample]], keep_dists: bool) -> Result<Vec<PredictionRecord>> {
    let comlen = check_ensemble(models)?;
    if encoded.len() != models.len() || encoded.iter().any(|e| e.len() != encoded[0].len()) {
        return Err(Error::usage("one equally long encoded sample list is needed per model"));
    }
    let samples = encoded[0];
    let budget = token_budget(comlen);
    let mut prefixes: Vec<Vec<usize>> = vec![vec![BOS]; samples.len()];
    let mut done = vec![false; samples.len()];
    let mut out: Vec<PredictionRecord> = samples
        .iter()
        .map(|s| PredictionRecord {
            sample_id: s.sample_id.clone(),
            predicted_ids: Vec::new(),
            step_dists: keep_dists.then(Vec::new),
        })
        .collect();
    let batch = models.iter().map(|m| m.config.batch).min().unwrap_or(1).max(1);
    for _ in 0..=budget {
        let live: Vec<usize> = (0..samples.len()).filter(|&i| !done[i]).collect();
        if live.is_empty() {
            break;
        }
        for chunk in live.chunks(batch) {
            let per_model: Vec<Vec<Vec<f64>>> = models
                .iter()
                .zip(encoded)
                .map(|(m, member_samples)| {
                    let inputs: Vec<DecoderInput> = chunk
                        .iter()
                        .map(|&i| {
                            let mut prefix = prefixes[i].clone();
                            prefix.resize(comlen, PAD);
                            DecoderInput {
                                sample: &member_samples[i],
                                prefix,
                            }
                        })
                        .collect();
                    forward_batch(&m.params, &m.config, &inputs)
                })
                .collect::<Result<_>>()?;
            for (row, &i) in chunk.iter().enumerate() {
                let dists: Vec<Vec<f64>> = per_model.iter().map(|d| d[row].clone()).collect();
                let mean = ensemble_distribution(&dists)?;
                let next = decode_argmax(&mean);
                if let Some(steps) = &mut out[i].step_dists {
                    steps.push(mean);
                }
                if next == EOS || out[i].predicted_ids.len() == budget {
                    done[i] = true;
                } else {
                    out[i].predicted_ids.push(next);
                    prefixes[i].push(next);
                    if out[i].predicted_ids.len() == budget {
                        done[i] = true;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// [`decode_members`] with one encoding shared by every member.
pub fn greedy_decode_batch(models: &[Model], samples: &[EncodedSample], keep_dists: bool) -> Result<Vec<PredictionRecord>> {
    let encoded: Vec<&[EncodedSample]> = models.iter().map(|_| samples).collect();
    decode_members(models, &encoded, keep_dists)
}

/// Greedy decoding of one sample: start from `<s>`, average the members'
/// distributions, take the argmax (lowest id on ties), stop at `</s>` or
/// after the token budget.
pub fn greedy_decode(models: &[Model], sample: &EncodedSample) -> Result<PredictionRecord> {
    Ok(greedy_decode_batch(models, std::slice::from_ref(sample), false)?.remove(0))
}

/// `sample_id<TAB>tokens`, one line per record.
pub fn format_predictions(records: &[PredictionRecord], summary_vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.sample_id);
        out.push('\t');
        out.push_str(&summary_vocab.decode(&r.predicted_ids).join(" "));
        out.push('\n');
    }
    out
}

/// Sample id and token list per line.
pub fn parse_predictions(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let (id, tokens) = line
            .split_once('\t')
            .ok_or_else(|| Error::format("prediction file", format!("line {}: missing tab", i + 1)))?;
        if id.is_empty() {
            return Err(Error::format("prediction file", format!("line {}: empty sample id", i + 1)));
        }
        out.push((id.to_string(), tokens.split_whitespace().map(str::to_string).collect()));
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text).map_err(|e| match e {
        Error::Format { what, msg } => Error::Format {
            what,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

/// Encodes `samples` for each member, decodes them in order and writes the
/// prediction file.
pub fn predict_corpus(
    models: &[Model],
    samples: &[Sample],
    code_vocab: &Vocabulary,
    summary_vocab: &Vocabulary,
    out_path: &Path,
) -> Result<Vec<PredictionRecord>> {
    for m in models {
        if m.config.summary_vocab_size != summary_vocab.len() || m.config.code_vocab_size != code_vocab.len() {
            return Err(Error::usage(format!(
                "model expects vocabularies of {} code / {} summary tokens, found {} / {}",
                m.config.code_vocab_size,
                m.config.summary_vocab_size,
                code_vocab.len(),
                summary_vocab.len()
            )));
        }
    }
    let encoded: Vec<Vec<EncodedSample>> = models
        .iter()
        .map(|m| {
            let dims = m.config.encode_dims();
            samples
                .iter()
                .map(|s| encode_sample(s, code_vocab, summary_vocab, &dims))
                .collect()
        })
        .collect();
    let views: Vec<&[EncodedSample]> = encoded.iter().map(Vec::as_slice).collect();
    let records = decode_members(models, &views, false)?;
    let file = File::create(out_path).map_err(|e| Error::io(out_path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(format_predictions(&records, summary_vocab).as_bytes())
        .map_err(|e| Error::io(out_path, e))?;
    w.flush().map_err(|e| Error::io(out_path, e))?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::argmax;

    #[test]
    fn mean_of_two() {
        let m = ensemble_distribution(&[vec![0.6, 0.4], vec![0.2, 0.8]]).unwrap();
        assert!((m[0] - 0.4).abs() < 1e-15 && (m[1] - 0.6).abs() < 1e-15);
        assert_eq!(argmax(&m), 1);
    }

    #[test]
    fn decoding_never_picks_pad_bos_or_unk() {
        assert_eq!(decode_argmax(&[0.9, 0.05, 0.02, 0.03, 0.0]), EOS);
        assert_eq!(decode_argmax(&[0.3, 0.3, 0.1, 0.2, 0.15, 0.0]), 4);
    }

    #[test]
    fn mean_is_idempotent() {
        let d = vec![0.1, 0.7, 0.2];
        assert_eq!(ensemble_distribution(&[d.clone(), d.clone(), d.clone()]).unwrap(), d);
    }

    #[test]
    fn length_mismatch_is_dimension_error() {
        assert!(matches!(
            ensemble_distribution(&[vec![1.0], vec![0.5, 0.5]]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn prediction_file_round_trip() {
        let text = "a\tgets the value\nb\t\n";
        let parsed = parse_predictions(text).unwrap();
        assert_eq!(parsed[0].1, vec!["gets", "the", "value"]);
        assert!(parsed[1].1.is_empty());
        assert!(parse_predictions("no tab here\n").is_err());
    }
}
