use serde::{Deserialize, Serialize};

use crate::corpus::EncodeDims;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Sequence encoder plus statement memory network.
    Smn,
    /// Sequence encoder only.
    AttendgruOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementEncoding {
    /// Position-weighted sum of word embeddings.
    Positional,
    /// Final state of a GRU read over the statement.
    Eos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateQuery {
    /// Every element equal to `q_fill`.
    ConstantQ,
    /// Final state of the summary GRU.
    SummaryVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateSquash {
    /// The gate is the raw sum of tanh features.
    None,
    /// The sum is passed through a sigmoid.
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub tdatlen: usize,
    pub comlen: usize,
    pub e_dim: usize,
    pub l_dim: usize,
    /// Memory hops.
    pub h: usize,
    /// Maximum statements.
    pub n: usize,
    /// Maximum tokens per statement.
    pub y: usize,
    pub batch: usize,
    pub code_vocab_size: usize,
    pub summary_vocab_size: usize,
    pub projection_dim: usize,
    pub encoder_kind: EncoderKind,
    pub statement_encoding: StatementEncoding,
    pub gate_query: GateQuery,
    pub q_fill: f64,
    pub gate_squash: GateSquash,
    pub rng_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            tdatlen: 200,
            comlen: 13,
            e_dim: 100,
            l_dim: 100,
            h: 3,
            n: 70,
            y: 30,
            batch: 100,
            code_vocab_size: 69725,
            summary_vocab_size: 10908,
            projection_dim: 256,
            encoder_kind: EncoderKind::Smn,
            statement_encoding: StatementEncoding::Positional,
            gate_query: GateQuery::ConstantQ,
            q_fill: 0.1,
            gate_squash: GateSquash::None,
            rng_seed: 0,
        }
    }
}

impl ModelConfig {
    /// The small configuration used for gradient checks.
    pub fn toy() -> Self {
        ModelConfig {
            tdatlen: 8,
            comlen: 4,
            e_dim: 3,
            l_dim: 3,
            h: 2,
            n: 2,
            y: 3,
            batch: 4,
            code_vocab_size: 7,
            summary_vocab_size: 5,
            projection_dim: 4,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.e_dim != self.l_dim {
            return Err(Error::usage(format!(
                "e_dim ({}) must equal l_dim ({})",
                self.e_dim, self.l_dim
            )));
        }
        if self.h == 0 || self.n == 0 || self.y == 0 {
            return Err(Error::usage("h, n and y must be at least 1"));
        }
        if self.e_dim == 0 || self.projection_dim == 0 || self.batch == 0 {
            return Err(Error::usage("dimensions and batch size must be positive"));
        }
        if self.code_vocab_size <= 4 || self.summary_vocab_size <= 4 {
            return Err(Error::usage("vocabularies must hold more than the reserved tokens"));
        }
        if !self.q_fill.is_finite() {
            return Err(Error::usage("q_fill must be finite"));
        }
        self.encode_dims().validate()
    }

    pub fn encode_dims(&self) -> EncodeDims {
        EncodeDims {
            tdatlen: self.tdatlen,
            comlen: self.comlen,
            n: self.n,
            y: self.y,
        }
    }

    pub fn uses_memory(&self) -> bool {
        self.encoder_kind == EncoderKind::Smn
    }

    /// Number of per-timestep vectors concatenated into the context.
    pub(crate) fn context_parts(&self) -> usize {
        if self.uses_memory() {
            3
        } else {
            2
        }
    }

    /// Product of the sequence and layer dimensions (`tdatlen, comlen,
    /// e_dim, l_dim, h, n, y`), used to refuse finite-difference runs on
    /// large models.
    pub fn dim_product(&self) -> u128 {
        [
            self.tdatlen,
            self.comlen,
            self.e_dim,
            self.l_dim,
            self.h,
            self.n,
            self.y,
        ]
        .iter()
        .map(|&d| d as u128)
        .product()
    }
}
