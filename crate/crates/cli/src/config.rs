//! Run configuration: one JSON file drives every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smn_core::corpus::{validate_ratios, SyntheticSpec};
use smn_core::model::{EncoderKind, GateQuery, ModelConfig, StatementEncoding};
use smn_core::{json, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub max_epochs: usize,
    pub lr: f64,
    pub grad_clip: Option<f64>,
    pub patience: Option<usize>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            max_epochs: 10,
            lr: 1e-3,
            grad_clip: None,
            patience: None,
        }
    }
}

/// One row of an ablation sweep; unset fields keep the base model's value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationVariant {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statement_encoding: Option<StatementEncoding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_query: Option<GateQuery>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder_kind: Option<EncoderKind>,
}

impl AblationVariant {
    fn named(name: &str) -> Self {
        AblationVariant {
            name: name.to_string(),
            h: None,
            statement_encoding: None,
            gate_query: None,
            encoder_kind: None,
        }
    }

    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        if let Some(h) = self.h {
            c.h = h;
        }
        if let Some(e) = self.statement_encoding {
            c.statement_encoding = e;
        }
        if let Some(q) = self.gate_query {
            c.gate_query = q;
        }
        if let Some(k) = self.encoder_kind {
            c.encoder_kind = k;
        }
        c
    }
}

/// The default sweep: the base model, h in {1, 2, 4, 5}, EOS statement
/// encoding, the summary-vector gate query, and the sequence-only model.
pub fn default_sweep() -> Vec<AblationVariant> {
    let mut out = vec![AblationVariant::named("default")];
    for h in [1, 2, 4, 5] {
        out.push(AblationVariant {
            h: Some(h),
            ..AblationVariant::named(&format!("h{h}"))
        });
    }
    out.push(AblationVariant {
        statement_encoding: Some(StatementEncoding::Eos),
        ..AblationVariant::named("eos")
    });
    out.push(AblationVariant {
        gate_query: Some(GateQuery::SummaryVector),
        ..AblationVariant::named("summary_vector")
    });
    out.push(AblationVariant {
        encoder_kind: Some(EncoderKind::AttendgruOnly),
        ..AblationVariant::named("attendgru_only")
    });
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSettings {
    pub trials: usize,
    pub model: ModelConfig,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        GradcheckSettings {
            trials: 100,
            model: ModelConfig::toy(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Val,
    Test,
}

impl EvalSplit {
    pub fn file_name(self) -> &'static str {
        match self {
            EvalSplit::Val => "val.tsv",
            EvalSplit::Test => "test.tsv",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Raw dataset file for `prepare`; a synthetic corpus is generated when
    /// absent.
    pub dataset: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
    pub split_ratios: [f64; 3],
    /// Drop samples with fewer statements before splitting.
    pub min_statements: usize,
    pub code_vocab_max: usize,
    pub summary_vocab_max: usize,
    /// Holds the splits and vocabularies written by `prepare`.
    pub data_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub eval_split: EvalSplit,
    /// The two prediction files compared by `analyze`.
    pub compare: Option<[PathBuf; 2]>,
    pub ablation_dir: Option<PathBuf>,
    pub sweep: Vec<AblationVariant>,
    /// Vocabulary sizes are taken from the prepared vocabularies.
    pub model: ModelConfig,
    pub train: TrainSettings,
    pub gradcheck: GradcheckSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            dataset: None,
            synthetic: SyntheticSpec::default(),
            split_ratios: [0.7, 0.15, 0.15],
            min_statements: 0,
            code_vocab_max: 69725,
            summary_vocab_max: 10908,
            data_dir: None,
            checkpoint: None,
            predictions: None,
            report: None,
            eval_split: EvalSplit::Test,
            compare: None,
            ablation_dir: None,
            sweep: default_sweep(),
            model: ModelConfig::default(),
            train: TrainSettings::default(),
            gradcheck: GradcheckSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = json::from_str(text, "run config").map_err(|e| Error::Usage(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_canonical(&self) -> Result<String> {
        json::to_canonical_pretty(self)
    }

    pub fn validate(&self) -> Result<()> {
        validate_ratios(self.split_ratios)?;
        if self.sweep.is_empty() {
            return Err(Error::Usage("sweep must list at least one configuration".into()));
        }
        if self.train.max_epochs == 0 {
            return Err(Error::Usage("train.max_epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str, command: &str) -> Result<&'a Path> {
        match field {
            Some(p) if !p.as_os_str().is_empty() => Ok(p.as_path()),
            _ => Err(Error::Usage(format!("`{command}` needs `{name}` in the config"))),
        }
    }
}
