use crate::tensor::Tensor;

/// Position weights `P[x, y] = (1 - y/Y) - (x/X)(1 - 2y/Y)` for 1-based
/// `x in 1..=X` (embedding coordinate) and `y in 1..=Y` (word position),
/// stored as an `[X, Y]` tensor.
pub fn positional_matrix(x_dim: usize, y_dim: usize) -> Tensor {
    let (xf, yf) = (x_dim as f64, y_dim as f64);
    let mut data = Vec::with_capacity(x_dim * y_dim);
    for x in 1..=x_dim {
        for y in 1..=y_dim {
            let (x, y) = (x as f64, y as f64);
            data.push((1.0 - y / yf) - (x / xf) * (1.0 - 2.0 * y / yf));
        }
    }
    Tensor::new(vec![x_dim, y_dim], data).expect("shape matches")
}

/// Column `y` (0-based word position) of an `[X, Y]` position matrix.
pub(crate) fn position_column(p: &Tensor, y: usize) -> Vec<f64> {
    let cols = p.shape()[1];
    p.data().iter().skip(y).step_by(cols).copied().collect()
}
