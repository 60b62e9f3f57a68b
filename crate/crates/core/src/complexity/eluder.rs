use super::info::BoundCheck;
use crate::error::{GecError, Result};
use nalgebra::DVector;

/// Inputs of the l2 eluder bound: `w[t][j]`, `x[t][i]`, laws `p[t]` over `i`, and the
/// bounds `R`, `R_x`, `R_w`, `gamma_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EluderInstance {
    pub dim: usize,
    pub w: Vec<Vec<DVector<f64>>>,
    pub x: Vec<Vec<DVector<f64>>>,
    pub p: Vec<Vec<f64>>,
    pub r: f64,
    pub r_x: f64,
    pub r_w: f64,
    pub gamma: Vec<f64>,
}

const CONSTRAINT_TOL: f64 = 1e-12;

fn l1_response(w: &[DVector<f64>], x: &DVector<f64>) -> f64 {
    w.iter().map(|wj| wj.dot(x).abs()).sum()
}

/// `sum_{s<t} sum_{i~p_s} (sum_j |w_{t,j}^T x_{s,i}|)^2`.
fn in_sample(w: &[Vec<DVector<f64>>], x: &[Vec<DVector<f64>>], p: &[Vec<f64>], t: usize) -> f64 {
    (0..t)
        .map(|s| p[s].iter().zip(&x[s]).map(|(pi, xi)| pi * l1_response(&w[t], xi).powi(2)).sum::<f64>())
        .sum()
}

fn x_moment(x: &[DVector<f64>], p: &[f64]) -> f64 {
    p.iter().zip(x).map(|(pi, xi)| pi * xi.norm_squared()).sum()
}

fn w_mass(w: &[DVector<f64>]) -> f64 {
    w.iter().map(|v| v.norm()).sum()
}

impl EluderInstance {
    /// Instance with the tightest bounds implied by the data.
    pub fn tight(w: Vec<Vec<DVector<f64>>>, x: Vec<Vec<DVector<f64>>>, p: Vec<Vec<f64>>, r: f64) -> Result<Self> {
        Self::check_shapes(&w, &x, &p, r)?;
        let t_ = w.len();
        let gamma = (0..t_).map(|t| in_sample(&w, &x, &p, t)).collect();
        let r_x = (0..t_).map(|t| x_moment(&x[t], &p[t])).fold(0.0, f64::max).sqrt();
        let r_w = w.iter().map(|wt| w_mass(wt)).fold(0.0, f64::max);
        let dim = w.iter().chain(&x).flatten().next().map_or(0, |v| v.len());
        Self::new(dim, w, x, p, r, r_x, r_w, gamma)
    }

    /// Instance with explicit bounds; errors when any of the three constraints fails.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        w: Vec<Vec<DVector<f64>>>,
        x: Vec<Vec<DVector<f64>>>,
        p: Vec<Vec<f64>>,
        r: f64,
        r_x: f64,
        r_w: f64,
        gamma: Vec<f64>,
    ) -> Result<Self> {
        Self::check_shapes(&w, &x, &p, r)?;
        if gamma.len() != w.len() {
            return Err(GecError::Config("one gamma_t per round is required".into()));
        }
        if w.iter().chain(&x).flatten().any(|v| v.len() != dim) {
            return Err(GecError::Config(format!("all vectors must have dimension {dim}")));
        }
        for t in 0..w.len() {
            let slack = |v: f64| CONSTRAINT_TOL * v.abs().max(1.0);
            let g = in_sample(&w, &x, &p, t);
            if g > gamma[t] + slack(gamma[t]) {
                return Err(GecError::Constraint(format!("round {t}: in-sample error {g} exceeds gamma_t {}", gamma[t])));
            }
            let m = x_moment(&x[t], &p[t]);
            if m > r_x * r_x + slack(r_x * r_x) {
                return Err(GecError::Constraint(format!("round {t}: E||x||^2 = {m} exceeds R_x^2")));
            }
            let n = w_mass(&w[t]);
            if n > r_w + slack(r_w) {
                return Err(GecError::Constraint(format!("round {t}: sum ||w|| = {n} exceeds R_w")));
            }
        }
        Ok(Self { dim, w, x, p, r, r_x, r_w, gamma })
    }

    fn check_shapes(w: &[Vec<DVector<f64>>], x: &[Vec<DVector<f64>>], p: &[Vec<f64>], r: f64) -> Result<()> {
        if !(r > 0.0) {
            return Err(GecError::Config("R must be positive".into()));
        }
        if w.len() != x.len() || x.len() != p.len() {
            return Err(GecError::Config("w, x and p must cover the same rounds".into()));
        }
        for (t, (xt, pt)) in x.iter().zip(p).enumerate() {
            if xt.len() != pt.len() {
                return Err(GecError::Config(format!("round {t}: {} points, {} weights", xt.len(), pt.len())));
            }
            crate::decision::check_distribution(pt, &format!("p_{t}"))?;
        }
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        self.w.len()
    }
}

/// `sum_t R ∧ sum_{i~p_t} sum_j |w_{t,j}^T x_{t,i}|` against
/// `sqrt(2 d (R^2 T + sum_t gamma_t) log(1 + T R_x^2 R_w^2 / R^2))`.
pub fn l2_eluder_check(inst: &EluderInstance) -> BoundCheck {
    let t_ = inst.rounds() as f64;
    let lhs: f64 = (0..inst.rounds())
        .map(|t| {
            let v: f64 = inst.p[t].iter().zip(&inst.x[t]).map(|(pi, xi)| pi * l1_response(&inst.w[t], xi)).sum();
            v.min(inst.r)
        })
        .sum();
    let gsum: f64 = inst.gamma.iter().sum();
    let log_term = (1.0 + t_ * inst.r_x.powi(2) * inst.r_w.powi(2) / inst.r.powi(2)).ln();
    let rhs = (2.0 * inst.dim as f64 * (inst.r.powi(2) * t_ + gsum) * log_term).sqrt();
    BoundCheck::new(lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_responses_pass() {
        let w = vec![vec![DVector::zeros(2)]; 3];
        let x = vec![vec![DVector::from_vec(vec![1.0, 2.0])]; 3];
        let inst = EluderInstance::tight(w, x, vec![vec![1.0]; 3], 1.0).unwrap();
        let c = l2_eluder_check(&inst);
        assert_eq!(c.lhs, 0.0);
        assert!(c.pass);
    }

    #[test]
    fn single_pair_at_the_cap() {
        let inst = EluderInstance::tight(
            vec![vec![DVector::from_vec(vec![2.0])]],
            vec![vec![DVector::from_vec(vec![0.5])]],
            vec![vec![1.0]],
            1.0,
        )
        .unwrap();
        let c = l2_eluder_check(&inst);
        assert_eq!(c.lhs, 1.0);
        assert!((c.rhs - (2.0 * 2f64.ln()).sqrt()).abs() < 1e-15);
        assert!(c.pass && c.rhs - c.lhs > 0.17);
    }

    #[test]
    fn violated_constraint_is_rejected() {
        let w = vec![vec![DVector::from_vec(vec![1.0])]; 2];
        let x = vec![vec![DVector::from_vec(vec![1.0])]; 2];
        let r = EluderInstance::new(1, w, x, vec![vec![1.0]; 2], 1.0, 1.0, 1.0, vec![0.0, 0.5]);
        assert!(matches!(r, Err(GecError::Constraint(_))));
    }
}
