//! Gated episodic memory over statement vectors.
//!
//! Each hop starts from an empty episode `m = 0` and visits the active
//! statements in order:
//!
//! ```text
//! G  = [F*Q, F*M, |F-Q|, |F-M|]        (4d features, M = previous memory)
//! g  = sum(tanh(G))                     (one scalar per statement)
//! m  = g * GRU(F, m) + (1 - g) * m
//! ```
//!
//! The episode left after the last statement is the hop's memory. Inactive
//! (padding) statements are skipped, so their rows never influence a memory.

use crate::error::{Error, Result};
use crate::model::config::GateSquash;
use crate::tensor::{gru_cell, Graph, GruVars, ParameterSet, Tensor, Var};

/// Memories and gate values of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryTrace {
    /// `h` rows of width `d`.
    pub memories: Vec<Vec<f64>>,
    /// `h` rows of `n` gates; skipped statements record 0.
    pub gates: Vec<Vec<f64>>,
}

impl MemoryTrace {
    /// One line per hop, gate values separated by spaces.
    pub fn gates_text(&self) -> String {
        let mut out = String::new();
        for row in &self.gates {
            let cells: Vec<String> = row.iter().map(|g| format!("{g:.6}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Graph handles produced by [`memory_hops`].
#[derive(Clone, Debug)]
pub struct HopVars {
    /// One `[B, d]` memory per hop.
    pub memories: Vec<Var>,
    /// `gates[hop][t]` is a `[B]` gate, `None` where every row skipped `t`.
    pub gates: Vec<Vec<Option<Var>>>,
}

impl HopVars {
    /// Pulls row `b` out of the recorded values.
    pub fn trace(&self, g: &Graph, b: usize) -> MemoryTrace {
        let memories = self
            .memories
            .iter()
            .map(|&m| g.value(m).row(b).to_vec())
            .collect();
        let gates = self
            .gates
            .iter()
            .map(|hop| {
                hop.iter()
                    .map(|gv| gv.map_or(0.0, |v| g.value(v).data()[b]))
                    .collect()
            })
            .collect();
        MemoryTrace { memories, gates }
    }
}

pub(crate) fn gate_impl(
    g: &mut Graph,
    f: Var,
    q: Var,
    m: Var,
    squash: GateSquash,
    corrupt: bool,
) -> Result<Var> {
    let fq = g.mul(f, q)?;
    let fm = g.mul(f, m)?;
    let dq = g.sub(f, q)?;
    let dq = g.abs(dq);
    let dm = g.sub(f, m)?;
    let mut dm = g.abs(dm);
    if corrupt {
        dm = g.detach(dm);
    }
    let axis = g.shape(f).len() - 1;
    let features = g.concat(&[fq, fm, dq, dm], axis)?;
    let t = g.tanh(features);
    let s = g.sum_axis(t, axis)?;
    Ok(match squash {
        GateSquash::None => s,
        GateSquash::Sigmoid => g.sigmoid(s),
    })
}

/// Gate for each row of `[B, d]` statement, query and memory tensors;
/// returns a `[B]` tensor.
pub fn gate(g: &mut Graph, f: Var, q: Var, m: Var, squash: GateSquash) -> Result<Var> {
    gate_impl(g, f, q, m, squash, false)
}

/// Gate of a single statement vector.
pub fn gate_value(f: &[f64], q: &[f64], m: &[f64]) -> Result<f64> {
    if f.len() != q.len() || f.len() != m.len() {
        return Err(Error::dim("gate", &[f.len(), q.len()], &[m.len()]));
    }
    let mut g = Graph::new();
    let row = |v: &[f64]| Tensor::new(vec![1, v.len()], v.to_vec());
    let (fv, qv, mv) = (g.constant(row(f)?), g.constant(row(q)?), g.constant(row(m)?));
    let out = gate(&mut g, fv, qv, mv, GateSquash::None)?;
    Ok(g.value(out).item())
}

pub(crate) fn memory_hops_impl(
    g: &mut Graph,
    facts: &[Var],
    active: &[Vec<bool>],
    query: Var,
    hops: usize,
    cell: &GruVars,
    squash: GateSquash,
    corrupt_gate: bool,
) -> Result<HopVars> {
    if hops == 0 {
        return Err(Error::usage("memory_hops needs at least one hop"));
    }
    if facts.len() != active.len() {
        return Err(Error::dim("memory_hops", &[facts.len()], &[active.len()]));
    }
    let shape = g.shape(query).to_vec();
    let zeros = g.constant(Tensor::zeros(&shape));
    let mut prev = zeros;
    let mut memories = Vec::with_capacity(hops);
    let mut gates = Vec::with_capacity(hops);
    for _ in 0..hops {
        let mut m = zeros;
        let mut hop_gates = Vec::with_capacity(facts.len());
        for (&f, mask) in facts.iter().zip(active) {
            if !mask.iter().any(|&a| a) {
                hop_gates.push(None);
                continue;
            }
            let gv = gate_impl(g, f, query, prev, squash, corrupt_gate)?;
            let cand = gru_cell(g, f, m, cell)?;
            let take = g.scale_rows(cand, gv)?;
            let keep_w = g.one_minus(gv);
            let keep = g.scale_rows(m, keep_w)?;
            let updated = g.add(take, keep)?;
            m = if mask.iter().all(|&a| a) {
                updated
            } else {
                g.select_rows(mask, updated, m)?
            };
            hop_gates.push(Some(gv));
        }
        memories.push(m);
        gates.push(hop_gates);
        prev = m;
    }
    Ok(HopVars { memories, gates })
}

/// Runs `hops` passes of the gated episodic GRU over `facts` (one `[B, d]`
/// tensor per statement slot). `active[t][b]` says whether row `b` has a
/// statement at slot `t`.
pub fn memory_hops(
    g: &mut Graph,
    facts: &[Var],
    active: &[Vec<bool>],
    query: Var,
    hops: usize,
    cell: &GruVars,
    squash: GateSquash,
) -> Result<HopVars> {
    memory_hops_impl(g, facts, active, query, hops, cell, squash, false)
}

/// Single-sample form: `facts` is `[n, d]`, statements at index
/// `>= statement_count` are padding. The GRU weights are read from
/// `params` under `prefix`.
pub fn memory_hops_values(
    facts: &Tensor,
    statement_count: usize,
    query: &[f64],
    hops: usize,
    params: &ParameterSet,
    prefix: &str,
    squash: GateSquash,
) -> Result<MemoryTrace> {
    let [n, d] = facts.shape() else {
        return Err(Error::dim("memory_hops", facts.shape(), &[0, query.len()]));
    };
    let (n, d) = (*n, *d);
    if d != query.len() {
        return Err(Error::dim("memory_hops", facts.shape(), &[query.len()]));
    }
    let mut g = Graph::new();
    let cell = GruVars::bind(&mut g, params, prefix)?;
    let q = g.constant(Tensor::new(vec![1, d], query.to_vec())?);
    let rows: Vec<Var> = (0..n)
        .map(|t| g.constant(Tensor::new(vec![1, d], facts.row(t).to_vec()).expect("row")))
        .collect();
    let active: Vec<Vec<bool>> = (0..n).map(|t| vec![t < statement_count]).collect();
    let hv = memory_hops(&mut g, &rows, &active, q, hops, &cell, squash)?;
    Ok(hv.trace(&g, 0))
}
