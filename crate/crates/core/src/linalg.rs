//! Small dense linear-algebra helpers shared by the PSR and complexity code.

use nalgebra::{DMatrix, DVector};

/// Relative tolerance used for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-9;

/// Singular values in non-increasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    match sv.first() {
        Some(&top) if top > 0.0 => sv.iter().filter(|&&s| s > rel_tol * top).count(),
        _ => 0,
    }
}

/// Moore-Penrose pseudo-inverse, discarding singular values below `rel_tol * sigma_max`.
pub fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    svd.pseudo_inverse(rel_tol * top)
        .expect("svd computed with both factors")
}

/// Induced l1 operator norm: the largest absolute column sum.
pub fn l1_operator_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn l1_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Greedy column pivoting: repeatedly take the column with the largest residual norm
/// after projecting out the columns already taken. Ties go to the lowest index.
pub fn greedy_pivot_columns(m: &DMatrix<f64>, count: usize) -> Vec<usize> {
    let mut residual = m.clone();
    let mut chosen = Vec::with_capacity(count);
    for _ in 0..count.min(m.ncols()) {
        let mut best = None;
        let mut best_norm = 0.0;
        for (j, col) in residual.column_iter().enumerate() {
            if chosen.contains(&j) {
                continue;
            }
            let n = col.norm();
            if n > best_norm {
                best_norm = n;
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        chosen.push(j);
        let q = residual.column(j) / best_norm;
        for k in 0..residual.ncols() {
            let proj = q.dot(&residual.column(k));
            let mut col = residual.column_mut(k);
            col.axpy(-proj, &q, 1.0);
        }
    }
    chosen
}

/// Matrix built from the listed columns of `m`.
pub fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}
