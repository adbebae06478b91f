//! Full encoder/decoder wiring.
//!
//! 1. Code ids -> shared code embedding -> encoder GRU -> `H_enc [B, T, d]`.
//! 2. Summary prefix -> summary embedding -> decoder GRU (seeded with the
//!    encoder's final state) -> `H_dec [B, C, d]`.
//! 3. (memory variant) Statements -> statement vectors -> memory hops ->
//!    `M [B, h, d]`.
//! 4. Dot-product attention of `H_dec` over `H_enc` and over `M`.
//! 5. `[ctx_enc, ctx_mem, H_dec]` per timestep -> dense + relu -> flatten ->
//!    dense -> softmax over the summary vocabulary.

use crate::corpus::vocab::PAD;
use crate::corpus::{EncodedSample, StatementMatrix};
use crate::error::{Error, Result};
use crate::model::config::{GateQuery, ModelConfig, StatementEncoding};
use crate::model::memory::{memory_hops_impl, HopVars, MemoryTrace};
use crate::model::positional::{position_column, positional_matrix};
use crate::tensor::{gru_cell, Graph, GruVars, Init, ParameterSet, Tensor, Var};

pub const CODE_EMBED: &str = "code_embed";
pub const SUMMARY_EMBED: &str = "summary_embed";
pub const ENCODER_GRU: &str = "encoder_gru";
pub const DECODER_GRU: &str = "decoder_gru";
pub const MEMORY_GRU: &str = "memory_gru";
pub const STATEMENT_GRU: &str = "statement_gru";
pub const CONTEXT_W: &str = "context_dense.w";
pub const CONTEXT_B: &str = "context_dense.b";
pub const OUTPUT_W: &str = "output_dense.w";
pub const OUTPUT_B: &str = "output_dense.b";

const EMBED_INIT: Init = Init::Uniform(0.05);

pub fn param_specs(config: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (e, d, p) = (config.e_dim, config.l_dim, config.projection_dim);
    let mut specs = vec![
        (CODE_EMBED.to_string(), vec![config.code_vocab_size, e], EMBED_INIT),
        (SUMMARY_EMBED.to_string(), vec![config.summary_vocab_size, e], EMBED_INIT),
    ];
    specs.extend(GruVars::param_specs(ENCODER_GRU, e, d));
    specs.extend(GruVars::param_specs(DECODER_GRU, e, d));
    if config.uses_memory() {
        specs.extend(GruVars::param_specs(MEMORY_GRU, e, d));
        if config.statement_encoding == StatementEncoding::Eos {
            specs.extend(GruVars::param_specs(STATEMENT_GRU, e, d));
        }
    }
    specs.push((CONTEXT_W.to_string(), vec![config.context_parts() * d, p], Init::Glorot));
    specs.push((CONTEXT_B.to_string(), vec![p], Init::Zeros));
    specs.push((
        OUTPUT_W.to_string(),
        vec![config.comlen * p, config.summary_vocab_size],
        Init::Glorot,
    ));
    specs.push((OUTPUT_B.to_string(), vec![config.summary_vocab_size], Init::Zeros));
    specs
}

/// Fresh weights seeded by `config.rng_seed`.
pub fn init_params(config: &ModelConfig) -> Result<ParameterSet> {
    config.validate()?;
    Ok(ParameterSet::initialize(&param_specs(config), config.rng_seed))
}

/// Checks that `params` has exactly the tensors `config` describes.
pub fn check_params(config: &ModelConfig, params: &ParameterSet) -> Result<()> {
    let specs = param_specs(config);
    if specs.len() != params.len() {
        return Err(Error::usage(format!(
            "configuration expects {} parameter tensors, found {}",
            specs.len(),
            params.len()
        )));
    }
    for (name, shape, _) in specs {
        match params.get(&name) {
            Some(t) if t.shape() == shape.as_slice() => {}
            Some(t) => return Err(Error::dim("parameters", &shape, t.shape())),
            None => return Err(Error::usage(format!("missing parameter `{name}`"))),
        }
    }
    Ok(())
}

/// One row of a forward batch: a sample and a `comlen`-long summary prefix
/// (`<s>`, generated ids, then padding).
#[derive(Clone, Debug)]
pub struct DecoderInput<'a> {
    pub sample: &'a EncodedSample,
    pub prefix: Vec<usize>,
}

/// Pads `prefix` to `comlen`.
pub fn pad_prefix(prefix: &[usize], comlen: usize) -> Result<Vec<usize>> {
    if prefix.len() > comlen {
        return Err(Error::usage(format!(
            "summary prefix of {} tokens exceeds comlen {comlen}",
            prefix.len()
        )));
    }
    let mut out = prefix.to_vec();
    out.resize(comlen, PAD);
    Ok(out)
}

/// Test-only fault switches for verifying that the gradient checker
/// catches broken implementations.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FaultInjection {
    /// Cuts the `|F - M|` gate feature from the tape.
    pub detach_gate_feature: bool,
}

struct Bound {
    code_embed: Var,
    summary_embed: Var,
    encoder: GruVars,
    decoder: GruVars,
    memory: Option<GruVars>,
    statement: Option<GruVars>,
    context_w: Var,
    context_b: Var,
    output_w: Var,
    output_b: Var,
}

impl Bound {
    fn new(g: &mut Graph, params: &ParameterSet, config: &ModelConfig) -> Result<Self> {
        let memory = config
            .uses_memory()
            .then(|| GruVars::bind(g, params, MEMORY_GRU))
            .transpose()?;
        let statement = (config.uses_memory()
            && config.statement_encoding == StatementEncoding::Eos)
            .then(|| GruVars::bind(g, params, STATEMENT_GRU))
            .transpose()?;
        Ok(Bound {
            code_embed: g.param(params, CODE_EMBED)?,
            summary_embed: g.param(params, SUMMARY_EMBED)?,
            encoder: GruVars::bind(g, params, ENCODER_GRU)?,
            decoder: GruVars::bind(g, params, DECODER_GRU)?,
            memory,
            statement,
            context_w: g.param(params, CONTEXT_W)?,
            context_b: g.param(params, CONTEXT_B)?,
            output_w: g.param(params, OUTPUT_W)?,
            output_b: g.param(params, OUTPUT_B)?,
        })
    }
}

/// Graph handles of one forward pass.
#[derive(Debug)]
pub struct ForwardVars {
    /// `[B, v]` next-word distributions.
    pub probs: Var,
    pub hops: Option<HopVars>,
}

/// Stacks `[B, d]` tensors into `[B, len, d]`.
fn stack(g: &mut Graph, rows: &[Var]) -> Result<Var> {
    let shape = g.shape(rows[0]).to_vec();
    let reshaped: Vec<Var> = rows
        .iter()
        .map(|&r| g.reshape(r, &[shape[0], 1, shape[1]]))
        .collect::<Result<_>>()?;
    g.concat(&reshaped, 1)
}

/// Runs a GRU over a sequence of `[B]` id columns from `initial`.
fn run_sequence(
    g: &mut Graph,
    embed: Var,
    cell: &GruVars,
    columns: &[Vec<usize>],
    initial: Var,
) -> Result<Vec<Var>> {
    let mut h = initial;
    let mut states = Vec::with_capacity(columns.len());
    for ids in columns {
        let x = g.embedding(embed, ids)?;
        h = gru_cell(g, x, h, cell)?;
        states.push(h);
    }
    Ok(states)
}

pub(crate) fn positional_facts(
    g: &mut Graph,
    embed: Var,
    e: usize,
    y: usize,
    batch: &[&StatementMatrix],
    active: &[Vec<bool>],
) -> Result<Vec<Var>> {
    let b = batch.len();
    let p = positional_matrix(e, y);
    let columns: Vec<Vec<f64>> = (0..y).map(|j| position_column(&p, j)).collect();
    let zeros = g.constant(Tensor::zeros(&[b, e]));
    let mut facts = Vec::with_capacity(active.len());
    for (t, mask) in active.iter().enumerate() {
        if !mask.iter().any(|&a| a) {
            facts.push(zeros);
            continue;
        }
        let mut ids = Vec::with_capacity(b * y);
        let mut weights = Vec::with_capacity(b * y * e);
        for st in batch {
            for (j, col) in columns.iter().enumerate() {
                ids.push(st.ids[t][j]);
                if j < st.lengths[t] {
                    weights.extend_from_slice(col);
                } else {
                    weights.extend(std::iter::repeat_n(0.0, e));
                }
            }
        }
        let emb = g.embedding(embed, &ids)?;
        let w = g.constant(Tensor::new(vec![b * y, e], weights)?);
        let weighted = g.mul(emb, w)?;
        let cube = g.reshape(weighted, &[b, y, e])?;
        facts.push(g.sum_axis(cube, 1)?);
    }
    Ok(facts)
}

pub(crate) fn eos_facts(
    g: &mut Graph,
    embed: Var,
    cell: &GruVars,
    d: usize,
    batch: &[&StatementMatrix],
) -> Result<Vec<Var>> {
    let b = batch.len();
    let (n, y) = (batch[0].rows(), batch[0].width());
    let zeros = g.constant(Tensor::zeros(&[b, d]));
    let mut facts = Vec::with_capacity(n);
    for t in 0..n {
        let mut h = zeros;
        for j in 0..y {
            let mask: Vec<bool> = batch.iter().map(|st| j < st.lengths[t]).collect();
            if !mask.iter().any(|&a| a) {
                break;
            }
            let ids: Vec<usize> = batch.iter().map(|st| st.ids[t][j]).collect();
            let x = g.embedding(embed, &ids)?;
            let next = gru_cell(g, x, h, cell)?;
            h = if mask.iter().all(|&a| a) {
                next
            } else {
                g.select_rows(&mask, next, h)?
            };
        }
        facts.push(h);
    }
    Ok(facts)
}

fn check_input(config: &ModelConfig, row: &DecoderInput) -> Result<()> {
    let s = row.sample;
    if s.code_ids.len() != config.tdatlen {
        return Err(Error::dim("forward code", &[s.code_ids.len()], &[config.tdatlen]));
    }
    if row.prefix.len() != config.comlen {
        return Err(Error::usage(format!(
            "summary prefix has {} ids, expected comlen {}",
            row.prefix.len(),
            config.comlen
        )));
    }
    let st = &s.statements;
    if st.rows() != config.n || st.width() != config.y {
        return Err(Error::dim("forward statements", &[st.rows(), st.width()], &[config.n, config.y]));
    }
    Ok(())
}

/// Records one forward pass for `batch` on `g`.
pub fn build_forward(
    g: &mut Graph,
    params: &ParameterSet,
    config: &ModelConfig,
    batch: &[DecoderInput],
) -> Result<ForwardVars> {
    build_forward_with(g, params, config, batch, FaultInjection::default())
}

#[doc(hidden)]
pub fn build_forward_with(
    g: &mut Graph,
    params: &ParameterSet,
    config: &ModelConfig,
    batch: &[DecoderInput],
    faults: FaultInjection,
) -> Result<ForwardVars> {
    if batch.is_empty() {
        return Err(Error::usage("forward needs at least one input"));
    }
    for row in batch {
        check_input(config, row)?;
    }
    let b = batch.len();
    let d = config.l_dim;
    let w = Bound::new(g, params, config)?;

    let zeros = g.constant(Tensor::zeros(&[b, d]));
    let code_cols: Vec<Vec<usize>> = (0..config.tdatlen)
        .map(|j| batch.iter().map(|r| r.sample.code_ids[j]).collect())
        .collect();
    let enc_states = run_sequence(g, w.code_embed, &w.encoder, &code_cols, zeros)?;
    let enc_final = *enc_states.last().expect("tdatlen > 0");
    let h_enc = stack(g, &enc_states)?;

    let sum_cols: Vec<Vec<usize>> = (0..config.comlen)
        .map(|i| batch.iter().map(|r| r.prefix[i]).collect())
        .collect();
    let dec_states = run_sequence(g, w.summary_embed, &w.decoder, &sum_cols, enc_final)?;
    let dec_final = *dec_states.last().expect("comlen > 0");
    let h_dec = stack(g, &dec_states)?;

    let scores = g.batch_matmul(h_dec, h_enc, true)?;
    let attn = g.softmax(scores)?;
    let ctx_enc = g.batch_matmul(attn, h_enc, false)?;

    let (parts, hops) = if let Some(mem_cell) = &w.memory {
        let active: Vec<Vec<bool>> = (0..config.n)
            .map(|t| {
                batch
                    .iter()
                    .map(|r| t < r.sample.statements.statement_count)
                    .collect()
            })
            .collect();
        let stmts: Vec<&StatementMatrix> = batch.iter().map(|r| &r.sample.statements).collect();
        let facts = match config.statement_encoding {
            StatementEncoding::Positional => {
                positional_facts(g, w.code_embed, config.e_dim, config.y, &stmts, &active)?
            }
            StatementEncoding::Eos => {
                let cell = w.statement.as_ref().expect("bound for eos");
                eos_facts(g, w.code_embed, cell, config.l_dim, &stmts)?
            }
        };
        let query = match config.gate_query {
            GateQuery::ConstantQ => g.constant(Tensor::filled(&[b, d], config.q_fill)),
            GateQuery::SummaryVector => dec_final,
        };
        let hv = memory_hops_impl(
            g,
            &facts,
            &active,
            query,
            config.h,
            mem_cell,
            config.gate_squash,
            faults.detach_gate_feature,
        )?;
        let mems = stack(g, &hv.memories)?;
        let mem_scores = g.batch_matmul(h_dec, mems, true)?;
        let mem_attn = g.softmax(mem_scores)?;
        let ctx_mem = g.batch_matmul(mem_attn, mems, false)?;
        (vec![ctx_enc, ctx_mem, h_dec], Some(hv))
    } else {
        (vec![ctx_enc, h_dec], None)
    };

    let context = g.concat(&parts, 2)?;
    let width = parts.len() * d;
    let flat = g.reshape(context, &[b * config.comlen, width])?;
    let proj = g.matmul(flat, w.context_w)?;
    let proj = g.add_bias(proj, w.context_b)?;
    let proj = g.relu(proj);
    let per_sample = g.reshape(proj, &[b, config.comlen * config.projection_dim])?;
    let logits = g.matmul(per_sample, w.output_w)?;
    let logits = g.add_bias(logits, w.output_b)?;
    let probs = g.softmax(logits)?;
    Ok(ForwardVars { probs, hops })
}

/// Next-word distribution for one sample and prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub next_word_dist: Vec<f64>,
    pub trace: Option<MemoryTrace>,
}

/// Single-sample forward pass. `prefix` starts with `<s>` and holds at most
/// `comlen` ids.
pub fn forward(
    sample: &EncodedSample,
    prefix: &[usize],
    params: &ParameterSet,
    config: &ModelConfig,
) -> Result<ForwardOutput> {
    let input = DecoderInput {
        sample,
        prefix: pad_prefix(prefix, config.comlen)?,
    };
    let mut g = Graph::new();
    let fv = build_forward(&mut g, params, config, std::slice::from_ref(&input))?;
    Ok(ForwardOutput {
        next_word_dist: g.value(fv.probs).data().to_vec(),
        trace: fv.hops.map(|h| h.trace(&g, 0)),
    })
}

/// Distributions for a batch, one row per input.
pub fn forward_batch(
    params: &ParameterSet,
    config: &ModelConfig,
    batch: &[DecoderInput],
) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new();
    let fv = build_forward(&mut g, params, config, batch)?;
    let v = g.value(fv.probs);
    Ok((0..batch.len()).map(|i| v.row(i).to_vec()).collect())
}
