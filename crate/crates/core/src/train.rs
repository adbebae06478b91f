//! Teacher-forced next-token training with Adam and validation-based
//! checkpoint selection.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::vocab::{BOS, EOS, PAD};
use crate::corpus::EncodedSample;
use crate::error::{Error, Result};
use crate::model::network::{build_forward, forward_batch, init_params, DecoderInput};
use crate::model::ModelConfig;
use crate::tensor::{AdamState, Graph, ParameterSet};

/// Probability floor used when scoring a target, matching the training loss.
const LOSS_FLOOR: f64 = 1e-12;

/// `<s>` plus `prefix_len - 1` reference tokens, predicting `target_id`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainingPair<'a> {
    pub sample: &'a EncodedSample,
    pub prefix_len: usize,
    pub target_id: usize,
}

impl TrainingPair<'_> {
    pub fn decoder_input(&self) -> DecoderInput<'_> {
        let ids = &self.sample.summary_ids;
        let mut prefix = ids[..self.prefix_len].to_vec();
        prefix.resize(ids.len(), PAD);
        DecoderInput {
            sample: self.sample,
            prefix,
        }
    }
}

/// One pair per content token plus one for `</s>`.
pub fn expand_pairs(sample: &EncodedSample) -> Vec<TrainingPair<'_>> {
    let ids = &sample.summary_ids;
    if ids.first() != Some(&BOS) {
        return Vec::new();
    }
    let end = ids.iter().position(|&t| t == EOS).unwrap_or(ids.len() - 1);
    (1..=end)
        .filter(|&i| ids[i] != PAD)
        .map(|i| TrainingPair {
            sample,
            prefix_len: i,
            target_id: ids[i],
        })
        .collect()
}

pub fn expand_corpus(samples: &[EncodedSample]) -> Vec<TrainingPair<'_>> {
    samples.iter().flat_map(expand_pairs).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub val_loss: f64,
}

impl EpochReport {
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}",
            self.epoch, self.train_loss, self.val_acc, self.val_loss
        )
    }
}

/// `epoch<TAB>train_loss<TAB>val_acc<TAB>val_loss`, one line per epoch.
pub fn training_log(reports: &[EpochReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&r.log_line());
        out.push('\n');
    }
    out
}

/// Index of the highest validation accuracy, ties to lower validation loss,
/// then to the earlier epoch.
pub fn select_best(reports: &[EpochReport]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in reports.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let cur = &reports[b];
                r.val_acc > cur.val_acc || (r.val_acc == cur.val_acc && r.val_loss < cur.val_loss)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Lowest index among the maxima.
pub fn argmax(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

/// Next-token accuracy and mean cross-entropy over `pairs`.
pub fn evaluate_next_token(pairs: &[TrainingPair], params: &ParameterSet, config: &ModelConfig) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut hits = 0usize;
    let mut loss = 0.0;
    for chunk in pairs.chunks(config.batch) {
        let inputs: Vec<DecoderInput> = chunk.iter().map(TrainingPair::decoder_input).collect();
        let dists = forward_batch(params, config, &inputs)?;
        for (pair, dist) in chunk.iter().zip(&dists) {
            if argmax(dist) == pair.target_id {
                hits += 1;
            }
            loss -= dist[pair.target_id].max(LOSS_FLOOR).ln();
        }
    }
    let n = pairs.len() as f64;
    Ok((hits as f64 / n, loss / n))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub max_epochs: usize,
    pub lr: f64,
    /// Global gradient-norm ceiling; off by default.
    pub grad_clip: Option<f64>,
    /// Stop after this many epochs without a new best.
    pub patience: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            max_epochs: 10,
            lr: 1e-3,
            grad_clip: None,
            patience: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParameterSet,
    pub best_epoch: usize,
    pub reports: Vec<EpochReport>,
}

/// Forward, mean cross-entropy, backward and one Adam update on `batch`.
/// Returns the loss before the update.
pub fn train_step(
    params: &mut ParameterSet,
    adam: &mut AdamState,
    config: &ModelConfig,
    batch: &[TrainingPair],
    grad_clip: Option<f64>,
) -> Result<f64> {
    let inputs: Vec<DecoderInput> = batch.iter().map(TrainingPair::decoder_input).collect();
    let targets: Vec<usize> = batch.iter().map(|p| p.target_id).collect();
    let mut g = Graph::new();
    let fv = build_forward(&mut g, params, config, &inputs)?;
    let loss = g.cross_entropy(fv.probs, &targets)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NumericInput { op: "training loss" });
    }
    params.zero_grad();
    g.backward(loss)?.accumulate_into(params);
    // Weights a batch never reached (e.g. the memory cell when no row has a
    // statement) still take an Adam step with zero gradient.
    for (_, t) in params.iter_mut() {
        if t.grad.is_none() {
            t.grad = Some(vec![0.0; t.numel()]);
        }
    }
    if let Some(limit) = grad_clip {
        let norm = params.grad_norm();
        if norm > limit {
            let s = limit / norm;
            for (_, t) in params.iter_mut() {
                if let Some(gr) = &mut t.grad {
                    gr.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
    }
    adam.step(params)?;
    if !params.all_finite() {
        return Err(Error::NumericInput { op: "parameter update" });
    }
    Ok(value)
}

/// Trains from a fresh initialization seeded by `config.rng_seed` and returns
/// the parameters of the selected epoch.
pub fn train(
    train_set: &[EncodedSample],
    val_set: &[EncodedSample],
    config: &ModelConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    train_with_progress(train_set, val_set, config, opts, |_| {})
}

pub fn train_with_progress(
    train_set: &[EncodedSample],
    val_set: &[EncodedSample],
    config: &ModelConfig,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::usage("training needs non-empty train and validation sets"));
    }
    if opts.max_epochs == 0 {
        return Err(Error::usage("max_epochs must be at least 1"));
    }
    let mut params = init_params(config)?;
    let mut adam = AdamState::new(&params, opts.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut pairs = expand_corpus(train_set);
    let val_pairs = expand_corpus(val_set);
    if pairs.is_empty() || val_pairs.is_empty() {
        return Err(Error::usage("no training pairs: summaries must be framed with <s> and </s>"));
    }

    let mut reports = Vec::new();
    let mut best: Option<(usize, ParameterSet)> = None;
    for epoch in 0..opts.max_epochs {
        pairs.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in pairs.chunks(config.batch) {
            let loss = train_step(&mut params, &mut adam, config, batch, opts.grad_clip)?;
            total += loss * batch.len() as f64;
        }
        let (val_acc, val_loss) = evaluate_next_token(&val_pairs, &params, config)?;
        let report = EpochReport {
            epoch,
            train_loss: total / pairs.len() as f64,
            val_acc,
            val_loss,
        };
        on_epoch(&report);
        reports.push(report);
        if select_best(&reports) == Some(epoch) {
            best = Some((epoch, params.clone()));
        }
        if let (Some(p), Some((b, _))) = (opts.patience, &best) {
            if epoch - b >= p {
                break;
            }
        }
    }
    let (best_epoch, mut params) = best.expect("at least one epoch");
    params.zero_grad();
    for (_, t) in params.iter_mut() {
        t.grad = None;
    }
    Ok(TrainOutcome {
        params,
        best_epoch,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::StatementMatrix;

    fn sample(summary: &[usize]) -> EncodedSample {
        EncodedSample {
            sample_id: "s".into(),
            code_ids: vec![4; 8],
            statements: StatementMatrix {
                ids: vec![vec![PAD; 3]; 2],
                statement_count: 0,
                lengths: vec![0, 0],
            },
            summary_ids: summary.to_vec(),
        }
    }

    #[test]
    fn pairs_for_short_summary() {
        let s = sample(&[BOS, 5, 6, EOS, PAD]);
        let pairs = expand_pairs(&s);
        let targets: Vec<usize> = pairs.iter().map(|p| p.target_id).collect();
        assert_eq!(targets, vec![5, 6, EOS]);
        assert_eq!(pairs[2].decoder_input().prefix, vec![BOS, 5, 6, PAD, PAD]);
    }

    #[test]
    fn minimal_summary_gives_one_pair() {
        let s = sample(&[BOS, EOS, PAD, PAD]);
        let pairs = expand_pairs(&s);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].target_id, EOS);
        assert_eq!(pairs[0].prefix_len, 1);
    }

    fn report(epoch: usize, acc: f64, loss: f64) -> EpochReport {
        EpochReport {
            epoch,
            train_loss: 0.0,
            val_acc: acc,
            val_loss: loss,
        }
    }

    #[test]
    fn best_epoch_tie_breaks() {
        assert_eq!(select_best(&[]), None);
        let r = [report(0, 0.5, 1.0), report(1, 0.7, 2.0), report(2, 0.7, 1.5), report(3, 0.7, 1.5)];
        assert_eq!(select_best(&r), Some(2));
    }

    #[test]
    fn argmax_prefers_lowest_id() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.25; 4]), 0);
    }

    #[test]
    fn log_format() {
        let line = report(3, 0.5, 1.25).log_line();
        assert_eq!(line, "3\t0.000000\t0.500000\t1.250000");
    }
}
