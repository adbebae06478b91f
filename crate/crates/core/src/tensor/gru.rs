use crate::error::Result;
use crate::tensor::{Graph, Init, ParameterSet, Var};

const GATES: [&str; 3] = ["z", "r", "h"];

/// Graph handles for one GRU's weights. Row-vector convention: inputs are
/// `[B, E]`, `w_*` are `[E, H]`, `u_*` are `[H, H]`, biases are `[H]`.
#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

impl GruVars {
    pub fn param_specs(prefix: &str, input: usize, hidden: usize) -> Vec<(String, Vec<usize>, Init)> {
        let mut out = Vec::with_capacity(9);
        for g in GATES {
            out.push((format!("{prefix}.w_{g}"), vec![input, hidden], Init::Glorot));
            out.push((format!("{prefix}.u_{g}"), vec![hidden, hidden], Init::Glorot));
            out.push((format!("{prefix}.b_{g}"), vec![hidden], Init::Zeros));
        }
        out
    }

    pub fn bind(graph: &mut Graph, params: &ParameterSet, prefix: &str) -> Result<Self> {
        let mut p = |s: &str| graph.param(params, &format!("{prefix}.{s}"));
        Ok(GruVars {
            w_z: p("w_z")?,
            u_z: p("u_z")?,
            b_z: p("b_z")?,
            w_r: p("w_r")?,
            u_r: p("u_r")?,
            b_r: p("b_r")?,
            w_h: p("w_h")?,
            u_h: p("u_h")?,
            b_h: p("b_h")?,
        })
    }
}

/// One GRU step:
///
/// ```text
/// z  = sigmoid(x Wz + h Uz + bz)
/// r  = sigmoid(x Wr + h Ur + br)
/// h~ = tanh(x Wh + (r * h) Uh + bh)
/// h' = z * h + (1 - z) * h~
/// ```
pub fn gru_cell(g: &mut Graph, x: Var, h: Var, w: &GruVars) -> Result<Var> {
    let gate = |g: &mut Graph, wx: Var, uh: Var, hin: Var, b: Var| -> Result<Var> {
        let a = g.matmul(x, wx)?;
        let c = g.matmul(hin, uh)?;
        let s = g.add(a, c)?;
        g.add_bias(s, b)
    };
    let zp = gate(g, w.w_z, w.u_z, h, w.b_z)?;
    let z = g.sigmoid(zp);
    let rp = gate(g, w.w_r, w.u_r, h, w.b_r)?;
    let r = g.sigmoid(rp);
    let rh = g.mul(r, h)?;
    let hp = gate(g, w.w_h, w.u_h, rh, w.b_h)?;
    let cand = g.tanh(hp);
    let keep = g.mul(z, h)?;
    let zc = g.one_minus(z);
    let fresh = g.mul(zc, cand)?;
    g.add(keep, fresh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn zero_params(e: usize, h: usize) -> ParameterSet {
        let specs: Vec<_> = GruVars::param_specs("cell", e, h)
            .into_iter()
            .map(|(n, s, _)| (n, s, Init::Zeros))
            .collect();
        ParameterSet::initialize(&specs, 0)
    }

    #[test]
    fn zero_weights_zero_state_is_fixed_point() {
        let p = zero_params(2, 3);
        let mut g = Graph::new();
        let w = GruVars::bind(&mut g, &p, "cell").unwrap();
        let x = g.constant(Tensor::zeros(&[1, 2]));
        let h = g.constant(Tensor::zeros(&[1, 3]));
        let out = gru_cell(&mut g, x, h, &w).unwrap();
        assert_eq!(g.value(out).data(), &[0.0; 3]);
    }

    #[test]
    fn zero_weights_halve_the_state() {
        let p = zero_params(2, 3);
        let mut g = Graph::new();
        let w = GruVars::bind(&mut g, &p, "cell").unwrap();
        let x = g.constant(Tensor::from_rows(&[&[0.7, -1.2]]));
        let h = g.constant(Tensor::from_rows(&[&[0.4, -2.0, 1.0]]));
        let out = gru_cell(&mut g, x, h, &w).unwrap();
        assert_eq!(g.value(out).data(), &[0.2, -1.0, 0.5]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = zero_params(2, 3);
        let mut g = Graph::new();
        let w = GruVars::bind(&mut g, &p, "cell").unwrap();
        let x = g.constant(Tensor::zeros(&[1, 4]));
        let h = g.constant(Tensor::zeros(&[1, 3]));
        assert!(gru_cell(&mut g, x, h, &w).is_err());
    }
}
