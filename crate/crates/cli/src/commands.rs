//! Subcommand bodies. Each returns `Ok(false)` only for a failed
//! verification (exit code 3).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use smn_core::corpus::{
    encode_sample, filter_by_length, generate_synthetic_corpus, read_dataset, split_by_project, write_dataset,
    EncodedSample, Field, Sample, Vocabulary,
};
use smn_core::corpus::vocab::BOS;
use smn_core::gradcheck::run_all;
use smn_core::infer::{predict_corpus, read_predictions, Model};
use smn_core::metrics::{
    difference_set, format_table, improved_set, paired_t_test, score_corpus, ReportRow, ScoredCorpus, SystemScores,
};
use smn_core::model::network::FaultInjection;
use smn_core::model::{forward, load_model, save_model, ModelConfig};
use smn_core::train::{train_with_progress, training_log, TrainOptions, TrainOutcome};
use smn_core::{json, Error, Result};

use crate::config::{EvalSplit, RunConfig};
use crate::{Command, Common, Fault};

pub const TRAIN_FILE: &str = "train.tsv";
pub const VAL_FILE: &str = "val.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const CODE_VOCAB_FILE: &str = "code.vocab";
pub const SUMMARY_VOCAB_FILE: &str = "summary.vocab";

pub fn dispatch(command: &Command) -> Result<bool> {
    match command {
        Command::Prepare(c) => prepare(&Context::load(c)?),
        Command::Train(c) => train(&Context::load(c)?),
        Command::Predict(c) => predict(&Context::load(c)?),
        Command::Evaluate(c) => evaluate(&Context::load(c)?),
        Command::Analyze(c) => analyze(&Context::load(c)?),
        Command::Ablate(c) => ablate(&Context::load(c)?),
        Command::Gradcheck(c) => gradcheck(&Context::load(c)?),
    }
}

/// Config plus command-line overrides.
pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub checkpoints: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub dump_gates: bool,
    pub faults: FaultInjection,
}

impl Context {
    pub fn load(args: &Common) -> Result<Self> {
        let config = RunConfig::load(&args.config)?;
        Ok(Context {
            seed: args.seed.unwrap_or(config.seed),
            checkpoints: args.checkpoint.clone(),
            out: args.out.clone(),
            dump_gates: args.dump_gates,
            faults: FaultInjection {
                detach_gate_feature: args.inject_fault == Some(Fault::DetachGate),
            },
            config,
        })
    }

    /// `--out` if given, else the config field.
    fn output<'a>(&'a self, field: &'a Option<PathBuf>, name: &str, command: &str) -> Result<&'a Path> {
        match &self.out {
            Some(p) => Ok(p),
            None => self.config.require(field, name, command),
        }
    }
}

/// Fails with a message naming the subcommand that produces `path`.
fn expect_artifact(path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("not found (written by `smn {producer}`)"),
            ),
        ))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn prepare(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.config;
    let dir = ctx.output(&cfg.data_dir, "data_dir", "prepare")?;
    let samples = match &cfg.dataset {
        Some(path) => read_dataset(path)?,
        None => generate_synthetic_corpus(&cfg.synthetic, ctx.seed)?,
    };
    let samples = filter_by_length(&samples, cfg.min_statements);
    let splits = split_by_project(&samples, cfg.split_ratios, ctx.seed)?;
    let code_vocab = Vocabulary::build(&splits.train, cfg.code_vocab_max, Field::Code)?;
    let summary_vocab = Vocabulary::build(&splits.train, cfg.summary_vocab_max, Field::Summary)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, bucket) in [TRAIN_FILE, VAL_FILE, TEST_FILE].iter().zip(splits.buckets()) {
        write_dataset(&dir.join(name), bucket)?;
    }
    write_text(&dir.join(CODE_VOCAB_FILE), &code_vocab.to_file_string())?;
    write_text(&dir.join(SUMMARY_VOCAB_FILE), &summary_vocab.to_file_string())?;
    println!(
        "prepared {} samples (train {}, val {}, test {}); vocabularies: code {}, summary {}",
        samples.len(),
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        code_vocab.len(),
        summary_vocab.len()
    );
    Ok(true)
}

/// Splits and vocabularies written by `prepare`.
pub struct Prepared {
    pub code_vocab: Vocabulary,
    pub summary_vocab: Vocabulary,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Prepared {
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<PathBuf> {
            let p = dir.join(name);
            expect_artifact(&p, "prepare")?;
            Ok(p)
        };
        let vocab = |name: &str| -> Result<Vocabulary> {
            let p = read(name)?;
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            Vocabulary::parse(&text).map_err(|e| Error::Format {
                what: "vocabulary",
                msg: format!("{}: {e}", p.display()),
            })
        };
        Ok(Prepared {
            code_vocab: vocab(CODE_VOCAB_FILE)?,
            summary_vocab: vocab(SUMMARY_VOCAB_FILE)?,
            train: read_dataset(&read(TRAIN_FILE)?)?,
            val: read_dataset(&read(VAL_FILE)?)?,
            test: read_dataset(&read(TEST_FILE)?)?,
        })
    }

    pub fn eval_samples(&self, split: EvalSplit) -> &[Sample] {
        match split {
            EvalSplit::Val => &self.val,
            EvalSplit::Test => &self.test,
        }
    }

    /// The configured model with vocabulary sizes filled in.
    pub fn model_config(&self, base: &ModelConfig, seed: u64) -> ModelConfig {
        ModelConfig {
            code_vocab_size: self.code_vocab.len(),
            summary_vocab_size: self.summary_vocab.len(),
            rng_seed: seed,
            ..base.clone()
        }
    }

    fn encode(&self, samples: &[Sample], config: &ModelConfig) -> Vec<EncodedSample> {
        let dims = config.encode_dims();
        samples
            .iter()
            .map(|s| encode_sample(s, &self.code_vocab, &self.summary_vocab, &dims))
            .collect()
    }

    pub fn references(&self, split: EvalSplit) -> Vec<(String, Vec<String>)> {
        self.eval_samples(split)
            .iter()
            .map(|s| (s.sample_id.clone(), s.summary_tokens.clone()))
            .collect()
    }
}

fn data(ctx: &Context, command: &str) -> Result<Prepared> {
    Prepared::load(ctx.config.require(&ctx.config.data_dir, "data_dir", command)?)
}

fn train_options(cfg: &RunConfig) -> TrainOptions {
    TrainOptions {
        max_epochs: cfg.train.max_epochs,
        lr: cfg.train.lr,
        grad_clip: cfg.train.grad_clip,
        patience: cfg.train.patience,
    }
}

/// Trains, then writes the checkpoint and `<checkpoint>.log`.
fn train_and_save(data: &Prepared, config: &ModelConfig, opts: &TrainOptions, checkpoint: &Path) -> Result<TrainOutcome> {
    let train_set = data.encode(&data.train, config);
    let val_set = data.encode(&data.val, config);
    let outcome = train_with_progress(&train_set, &val_set, config, opts, |r| eprintln!("{}", r.log_line()))?;
    if let Some(dir) = checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_model(checkpoint, config, &outcome.params)?;
    write_text(&with_suffix(checkpoint, ".log"), &training_log(&outcome.reports))?;
    Ok(outcome)
}

fn train(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.config;
    let data = data(ctx, "train")?;
    let checkpoint = match (&ctx.out, ctx.checkpoints.first()) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => p.clone(),
        (None, None) => cfg.require(&cfg.checkpoint, "checkpoint", "train")?.to_path_buf(),
    };
    let config = data.model_config(&cfg.model, ctx.seed);
    let outcome = train_and_save(&data, &config, &train_options(cfg), &checkpoint)?;
    println!(
        "best epoch {} of {}; checkpoint written to {}",
        outcome.best_epoch,
        outcome.reports.len(),
        checkpoint.display()
    );
    Ok(true)
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<Model>> {
    paths
        .iter()
        .map(|p| {
            expect_artifact(p, "train")?;
            let (config, params) = load_model(p)?;
            Ok(Model { config, params })
        })
        .collect()
}

/// One `# sample_id` header per sample followed by one line of gate values
/// per hop, taken at the first decoding step.
fn gates_dump(model: &Model, data: &Prepared, samples: &[Sample]) -> Result<String> {
    let mut out = String::new();
    for enc in data.encode(samples, &model.config) {
        let trace = forward(&enc, &[BOS], &model.params, &model.config)?.trace;
        let _ = writeln!(out, "# {}", enc.sample_id);
        if let Some(t) = trace {
            out.push_str(&t.gates_text());
        }
    }
    Ok(out)
}

fn predict(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.config;
    let data = data(ctx, "predict")?;
    let paths = if ctx.checkpoints.is_empty() {
        vec![cfg.require(&cfg.checkpoint, "checkpoint", "predict")?.to_path_buf()]
    } else {
        ctx.checkpoints.clone()
    };
    let out = ctx.output(&cfg.predictions, "predictions", "predict")?;
    let models = load_models(&paths)?;
    let samples = data.eval_samples(cfg.eval_split);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let records = predict_corpus(&models, samples, &data.code_vocab, &data.summary_vocab, out)?;
    if ctx.dump_gates {
        let model = models
            .iter()
            .find(|m| m.config.uses_memory())
            .ok_or_else(|| Error::Usage("--dump-gates needs a model with statement memory".into()))?;
        write_text(&with_suffix(out, ".gates"), &gates_dump(model, &data, samples)?)?;
    }
    println!(
        "{} predictions from {} model(s) written to {}",
        records.len(),
        models.len(),
        out.display()
    );
    Ok(true)
}

#[derive(Serialize)]
struct SampleScore<'a> {
    sample_id: &'a str,
    meteor: f64,
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    system: String,
    samples: usize,
    meteor: f64,
    bleu: f64,
    per_sample: Vec<SampleScore<'a>>,
}

fn system_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn score_file(path: &Path, refs: &[(String, Vec<String>)]) -> Result<ScoredCorpus> {
    expect_artifact(path, "predict")?;
    score_corpus(refs, &read_predictions(path)?)
}

fn evaluate(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.config;
    let data = data(ctx, "evaluate")?;
    let preds = cfg.require(&cfg.predictions, "predictions", "evaluate")?;
    let report = ctx.output(&cfg.report, "report", "evaluate")?;
    let scored = score_file(preds, &data.references(cfg.eval_split))?;
    let row = ReportRow {
        system: system_name(preds),
        meteor: scored.mean_meteor,
        bleu: scored.corpus_bleu,
        t: None,
        p: None,
    };
    let table = format_table(std::slice::from_ref(&row));
    let json_report = EvaluationReport {
        system: row.system.clone(),
        samples: scored.samples.len(),
        meteor: scored.mean_meteor,
        bleu: scored.corpus_bleu,
        per_sample: scored
            .samples
            .iter()
            .map(|s| SampleScore {
                sample_id: &s.sample_id,
                meteor: s.meteor,
            })
            .collect(),
    };
    write_text(report, &table)?;
    write_text(&with_suffix(report, ".json"), &json::to_canonical_pretty(&json_report)?)?;
    print!("{table}");
    Ok(true)
}

fn fmt_scores(s: Option<SystemScores>) -> String {
    match s {
        Some(s) => format!("{:.2}\t{:.2}", 100.0 * s.meteor, s.bleu),
        None => "\u{2014}\t\u{2014}".to_string(),
    }
}

fn analyze(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.config;
    let [path_a, path_b] = cfg
        .compare
        .as_ref()
        .ok_or_else(|| Error::Usage("`analyze` needs `compare` (two prediction files) in the config".into()))?;
    let data = data(ctx, "analyze")?;
    let report = ctx.output(&cfg.report, "report", "analyze")?;
    let refs = data.references(cfg.eval_split);
    let a = score_file(path_a, &refs)?;
    let b = score_file(path_b, &refs)?;
    let preds_a = read_predictions(path_a)?;
    let preds_b = read_predictions(path_b)?;
    let partition = difference_set(&preds_a, &preds_b, &refs)?;
    let ids: Vec<String> = a.samples.iter().map(|s| s.sample_id.clone()).collect();
    let (ma, mb) = (a.meteors(), b.meteors());
    let a_over_b = improved_set(&ids, &ma, &mb)?;
    let b_over_a = improved_set(&ids, &mb, &ma)?;
    let test = paired_t_test(&mb, &ma)?;
    let (name_a, name_b) = (system_name(path_a), system_name(path_b));

    let mut out = format_table(&[
        ReportRow {
            system: name_a.clone(),
            meteor: a.mean_meteor,
            bleu: a.corpus_bleu,
            t: None,
            p: None,
        },
        ReportRow {
            system: name_b.clone(),
            meteor: b.mean_meteor,
            bleu: b.corpus_bleu,
            t: Some(test.t),
            p: Some(test.p),
        },
    ]);
    let n = refs.len();
    let _ = writeln!(out);
    let _ = writeln!(out, "set\tsystem\tsize\tpct\tMETEOR\tBLEU");
    let _ = writeln!(
        out,
        "same\tboth\t{}\t{:.2}\t{}",
        partition.same_ids.len(),
        100.0 - partition.difference_pct,
        fmt_scores(partition.same)
    );
    for (name, scores) in [(&name_a, partition.difference_a), (&name_b, partition.difference_b)] {
        let _ = writeln!(
            out,
            "difference\t{name}\t{}\t{:.2}\t{}",
            partition.difference_ids.len(),
            partition.difference_pct,
            fmt_scores(scores)
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "improved\tsize\tpct\tMETEOR winner\tMETEOR other");
    for (label, set) in [(format!("{name_a} > {name_b}"), &a_over_b), (format!("{name_b} > {name_a}"), &b_over_a)] {
        let _ = writeln!(
            out,
            "{label}\t{}\t{:.2}\t{:.2}\t{:.2}",
            set.ids.len(),
            set.size_pct,
            100.0 * set.mean_a,
            100.0 * set.mean_b
        );
    }
    let _ = writeln!(out, "\nsamples\t{n}");

    #[derive(Serialize)]
    struct AnalysisReport<'a> {
        systems: [&'a str; 2],
        partition: &'a smn_core::metrics::SetPartition,
        improved: [&'a smn_core::metrics::ImprovedSet; 2],
        t: f64,
        p: f64,
        df: usize,
    }
    let json_report = AnalysisReport {
        systems: [&name_a, &name_b],
        partition: &partition,
        improved: [&a_over_b, &b_over_a],
        t: test.t,
        p: test.p,
        df: test.df,
    };
    write_text(report, &out)?;
    write_text(&with_suffix(report, ".json"), &json::to_canonical_pretty(&json_report)?)?;
    print!("{out}");
    Ok(true)
}

#[derive(Serialize)]
struct AblationRow {
    name: String,
    params: usize,
    best_epoch: usize,
    meteor: f64,
    bleu: f64,
    t: Option<f64>,
    p: Option<f64>,
}

fn ablate(ctx: &Context) -> Result<bool> {
    let cfg = &ctx.config;
    let data = data(ctx, "ablate")?;
    let dir = ctx.output(&cfg.ablation_dir, "ablation_dir", "ablate")?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let base = data.model_config(&cfg.model, ctx.seed);
    let opts = train_options(cfg);
    let samples = data.eval_samples(cfg.eval_split);
    let refs = data.references(cfg.eval_split);

    let mut scored: Vec<(usize, usize, ScoredCorpus)> = Vec::new();
    for variant in &cfg.sweep {
        let config = variant.apply(&base);
        eprintln!("training {}", variant.name);
        let checkpoint = dir.join(format!("{}.ckpt", variant.name));
        let outcome = train_and_save(&data, &config, &opts, &checkpoint)?;
        let model = Model {
            config,
            params: outcome.params,
        };
        let pred_path = dir.join(format!("{}.pred", variant.name));
        let params: usize = model.params.iter().map(|(_, t)| t.numel()).sum();
        predict_corpus(
            std::slice::from_ref(&model),
            samples,
            &data.code_vocab,
            &data.summary_vocab,
            &pred_path,
        )?;
        scored.push((params, outcome.best_epoch, score_file(&pred_path, &refs)?));
    }

    // The row named "default", else the first, is the reference row.
    let baseline = cfg.sweep.iter().position(|v| v.name == "default").unwrap_or(0);
    let base_meteors = scored[baseline].2.meteors();
    let mut rows = Vec::new();
    let mut table_rows = Vec::new();
    for (i, (variant, (params, best_epoch, s))) in cfg.sweep.iter().zip(&scored).enumerate() {
        let test = if i == baseline {
            None
        } else {
            Some(paired_t_test(&s.meteors(), &base_meteors)?)
        };
        let label = if i == baseline {
            format!("{} (baseline)", variant.name)
        } else {
            variant.name.clone()
        };
        table_rows.push(ReportRow {
            system: label,
            meteor: s.mean_meteor,
            bleu: s.corpus_bleu,
            t: test.map(|t| t.t),
            p: test.map(|t| t.p),
        });
        rows.push(AblationRow {
            name: variant.name.clone(),
            params: *params,
            best_epoch: *best_epoch,
            meteor: s.mean_meteor,
            bleu: s.corpus_bleu,
            t: test.map(|t| t.t),
            p: test.map(|t| t.p),
        });
    }
    let mut text = format_table(&table_rows);
    let _ = writeln!(text, "\nsystem\tparams\tbest_epoch");
    for r in &rows {
        let _ = writeln!(text, "{}\t{}\t{}", r.name, r.params, r.best_epoch);
    }
    write_text(&dir.join("report.txt"), &text)?;
    write_text(&dir.join("report.json"), &json::to_canonical_pretty(&rows)?)?;
    print!("{text}");
    Ok(true)
}

fn gradcheck(ctx: &Context) -> Result<bool> {
    let settings = &ctx.config.gradcheck;
    let report = run_all(&settings.model, settings.trials, ctx.seed, ctx.faults)?;
    let text = report.to_text();
    if let Some(out) = &ctx.out {
        write_text(out, &text)?;
    }
    print!("{text}");
    if report.passed() {
        println!("all {} checks passed", report.results.len());
    } else {
        let failed = report.results.iter().filter(|r| !r.passed()).count();
        println!("{failed} of {} checks failed", report.results.len());
    }
    Ok(report.passed())
}
