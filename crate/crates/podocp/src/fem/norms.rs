//! Norms induced by assembled Gram matrices, for single fields and for
//! trajectories sampled at uniform time nodes.

use crate::sparse::CsrMatrix;

/// `sqrt(x^T G x)` for a Gram matrix `G`.
pub fn weighted_norm(gram: &CsrMatrix, x: &[f64]) -> f64 {
    gram.bilinear(x, x).max(0.0).sqrt()
}

/// `x^T G y`.
pub fn weighted_inner(gram: &CsrMatrix, x: &[f64], y: &[f64]) -> f64 {
    gram.bilinear(x, y)
}

/// Trajectory inner product `sum_k dt * x_k^T G y_k` for vectors stored as
/// `nt` stacked spatial slices.
pub fn spacetime_inner(gram: &CsrMatrix, nt: usize, dt: f64, x: &[f64], y: &[f64]) -> f64 {
    let n = gram.nrows();
    assert_eq!(x.len(), n * nt);
    assert_eq!(y.len(), n * nt);
    let mut acc = 0.0;
    for k in 0..nt {
        acc += gram.bilinear(&x[k * n..(k + 1) * n], &y[k * n..(k + 1) * n]);
    }
    dt * acc
}

/// Trajectory norm induced by [`spacetime_inner`].
pub fn spacetime_norm(gram: &CsrMatrix, nt: usize, dt: f64, x: &[f64]) -> f64 {
    spacetime_inner(gram, nt, dt, x, x).max(0.0).sqrt()
}

/// Apply `G` to every time slice: `y_k = G x_k`.
pub fn apply_per_slice(gram: &CsrMatrix, nt: usize, x: &[f64], y: &mut [f64]) {
    let n = gram.nrows();
    assert_eq!(gram.ncols(), n);
    assert_eq!(x.len(), n * nt);
    assert_eq!(y.len(), n * nt);
    for k in 0..nt {
        gram.matvec(&x[k * n..(k + 1) * n], &mut y[k * n..(k + 1) * n]);
    }
}
