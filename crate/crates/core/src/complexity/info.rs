use crate::error::{GecError, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Pass/fail comparison of the two sides of an inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl BoundCheck {
    pub const TOL: f64 = 1e-9;

    pub fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            pass: lhs <= rhs + Self::TOL,
        }
    }
}

fn log_det_pd(m: DMatrix<f64>) -> Result<f64> {
    let c = m
        .cholesky()
        .ok_or_else(|| GecError::Constraint("matrix is not positive definite".into()))?;
    Ok(2.0 * c.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

fn dimension_of(xs: &[DVector<f64>]) -> Result<usize> {
    let d = xs.first().map_or(0, |x| x.len());
    if xs.iter().any(|x| x.len() != d) {
        return Err(GecError::Config("vectors of different dimensions".into()));
    }
    Ok(d)
}

/// `log det(I + (1/eps) sum_t x_t x_t^T)` via Cholesky.
pub fn information_gain(xs: &[DVector<f64>], eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(GecError::Config(format!("information gain needs eps > 0, got {eps}")));
    }
    let d = dimension_of(xs)?;
    if d == 0 {
        return Ok(0.0);
    }
    let mut m = DMatrix::<f64>::identity(d, d);
    for x in xs {
        m.ger(1.0 / eps, x, x, 1.0);
    }
    log_det_pd(m)
}

/// `sum_i min(1, ||x_i||^2_{Lambda_i^{-1}})` against `2 log(det Lambda_{T+1} / det Lambda_1)`,
/// with `Lambda_i = Lambda_0 + sum_{s<i} x_s x_s^T`.
pub fn elliptical_potential_check(xs: &[DVector<f64>], lambda0: &DMatrix<f64>) -> Result<BoundCheck> {
    let d = lambda0.nrows();
    if lambda0.ncols() != d || xs.iter().any(|x| x.len() != d) {
        return Err(GecError::Config("dimension mismatch between vectors and Lambda_0".into()));
    }
    let first = log_det_pd(lambda0.clone())?;
    let mut lambda = lambda0.clone();
    let mut lhs = 0.0;
    for x in xs {
        let c = lambda
            .clone()
            .cholesky()
            .ok_or_else(|| GecError::Constraint("Lambda lost positive definiteness".into()))?;
        let q = x.dot(&c.solve(x));
        lhs += q.min(1.0);
        lambda.ger(1.0, x, x, 1.0);
    }
    let rhs = 2.0 * (log_det_pd(lambda)? - first);
    Ok(BoundCheck::new(lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_vector_gain() {
        let g = information_gain(&[DVector::from_vec(vec![1.0, 0.0, 0.0])], 1.0).unwrap();
        assert!((g - 2f64.ln()).abs() < 1e-15);
        assert_eq!(information_gain(&[DVector::zeros(3)], 0.5).unwrap(), 0.0);
        assert!(information_gain(&[], 0.0).is_err());
    }

    #[test]
    fn empty_potential() {
        let c = elliptical_potential_check(&[], &DMatrix::identity(2, 2)).unwrap();
        assert_eq!((c.lhs, c.rhs, c.pass), (0.0, 0.0, true));
    }
}
