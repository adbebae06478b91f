//! Statement vectors for a single sample, outside of a full forward pass.

use crate::corpus::StatementMatrix;
use crate::error::{Error, Result};
use crate::model::network::{eos_facts, positional_facts};
use crate::tensor::{Graph, GruVars, ParameterSet, Tensor, Var};

fn stack_rows(g: &Graph, rows: &[Var], n: usize, d: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(n * d);
    for &r in rows {
        data.extend_from_slice(g.value(r).data());
    }
    Tensor::new(vec![n, d], data)
}

fn table_width(embedding: &Tensor) -> Result<usize> {
    match embedding.shape() {
        [_, e] => Ok(*e),
        other => Err(Error::dim("statement embedding", other, &[0, 0])),
    }
}

/// `F[t] = sum_y emb(ids[t][y]) * P[:, y]` over the statement's words, with
/// `P` sized to the embedding width and the matrix width. Padding rows are
/// zero.
pub fn encode_statements_positional(statements: &StatementMatrix, embedding: &Tensor) -> Result<Tensor> {
    let e = table_width(embedding)?;
    let (n, y) = (statements.rows(), statements.width());
    let mut g = Graph::new();
    let table = g.constant(embedding.clone());
    let active: Vec<Vec<bool>> = (0..n).map(|t| vec![t < statements.statement_count]).collect();
    let rows = positional_facts(&mut g, table, e, y, &[statements], &active)?;
    stack_rows(&g, &rows, n, e)
}

/// `F[t]` is the final state of the GRU under `prefix` run over the
/// statement's word embeddings from a zero state. Padding rows are zero.
pub fn encode_statements_eos(
    statements: &StatementMatrix,
    embedding: &Tensor,
    params: &ParameterSet,
    prefix: &str,
) -> Result<Tensor> {
    let e = table_width(embedding)?;
    let n = statements.rows();
    let mut g = Graph::new();
    let table = g.constant(embedding.clone());
    let cell = GruVars::bind(&mut g, params, prefix)?;
    let rows = eos_facts(&mut g, table, &cell, e, &[statements])?;
    stack_rows(&g, &rows, n, e)
}
