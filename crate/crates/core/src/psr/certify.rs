use super::{test_emission_matrix, OperatorPsr, REACH_TOL};
use crate::decision::TabularPomdp;
use crate::error::{GecError, Result};
use crate::linalg::{greedy_pivot_columns, l1_operator_norm, numerical_rank, pinv, select_columns, RANK_TOL};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Largest `alpha` for which both generalized-regularity conditions hold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralizedRegularity {
    pub alpha: f64,
    /// `max_i W_k(e_i)` per step, where `W_H(v) = |v|` and
    /// `W_k(v) = sum_o max_a W_{k+1}(M_k(o,a) v)`.
    pub condition1: Vec<f64>,
    /// `max_i sum_o max_a ||M_k(o,a) e_i||_1` per step `k < H-1`.
    pub condition2: Vec<f64>,
}

/// Exact generalized-regularity certificate.
///
/// The sup over policies and unit-ball vectors in the first condition is a convex,
/// positively homogeneous and even function of the vector, so it is attained at a unit
/// vector `e_i`; the policy maximum is taken by backward recursion.
pub fn check_generalized_regular(psr: &OperatorPsr, node_cap: usize) -> Result<GeneralizedRegularity> {
    let h_ = psr.horizon();
    let mut nodes = 0usize;
    let mut condition1 = Vec::with_capacity(h_);
    for k in 0..h_ {
        let d = psr.core.len_at(k);
        let mut best: f64 = 0.0;
        for i in 0..d {
            let e = DVector::from_fn(d, |j, _| if i == j { 1.0 } else { 0.0 });
            best = best.max(w_value(psr, k, &e, &mut nodes, node_cap)?);
        }
        condition1.push(best);
    }
    let mut condition2 = Vec::with_capacity(h_.saturating_sub(1));
    for k in 0..h_.saturating_sub(1) {
        let d = psr.core.len_at(k);
        let mut best: f64 = 0.0;
        for i in 0..d {
            let mut total = 0.0;
            for o in 0..psr.n_obs {
                let mut m: f64 = 0.0;
                for a in 0..psr.n_actions {
                    let col: f64 = psr.operators[k][o][a].column(i).iter().map(|x| x.abs()).sum();
                    m = m.max(col);
                }
                total += m;
            }
            best = best.max(total);
        }
        condition2.push(best);
    }
    let mut alpha = f64::INFINITY;
    for &c in &condition1 {
        if c > 0.0 {
            alpha = alpha.min(1.0 / c);
        }
    }
    for (k, &c) in condition2.iter().enumerate() {
        if c > 0.0 {
            alpha = alpha.min(psr.core.action_sequences(k + 1).len() as f64 / c);
        }
    }
    Ok(GeneralizedRegularity {
        alpha,
        condition1,
        condition2,
    })
}

fn w_value(psr: &OperatorPsr, k: usize, v: &DVector<f64>, nodes: &mut usize, cap: usize) -> Result<f64> {
    *nodes += 1;
    if *nodes > cap {
        return Err(GecError::TooLarge(format!("more than {cap} recursion nodes")));
    }
    if k == psr.horizon() {
        return Ok(v[0].abs());
    }
    if v.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for o in 0..psr.n_obs {
        let mut best: f64 = 0.0;
        for a in 0..psr.n_actions {
            let next = &psr.operators[k][o][a] * v;
            best = best.max(w_value(psr, k + 1, &next, nodes, cap)?);
        }
        total += best;
    }
    Ok(total)
}

/// Normalized predictive vectors of every history of a given length, as columns.
#[derive(Debug, Clone)]
pub struct DynamicsMatrix {
    pub length: usize,
    pub matrix: DMatrix<f64>,
    /// `(observations, actions)` of each column, in lexicographic order.
    pub histories: Vec<(Vec<usize>, Vec<usize>)>,
    pub reachable: Vec<bool>,
}

/// `D̄` for histories of `length` pairs; unreachable histories give zero columns.
pub fn dynamics_matrix(psr: &OperatorPsr, length: usize, column_cap: usize) -> Result<DynamicsMatrix> {
    let n = (psr.n_obs * psr.n_actions)
        .checked_pow(length as u32)
        .filter(|&n| n <= column_cap)
        .ok_or_else(|| GecError::TooLarge(format!("more than {column_cap} histories of length {length}")))?;
    let rows = psr.core.len_at(length);
    let mut cols = Vec::with_capacity(n);
    let mut histories = Vec::with_capacity(n);
    let mut reachable = Vec::with_capacity(n);
    let mut obs = Vec::new();
    let mut acts = Vec::new();
    collect(psr, length, psr.q0.clone(), &mut obs, &mut acts, &mut |o, a, q| {
        let p = psr.normalizer(length).dot(q);
        histories.push((o.to_vec(), a.to_vec()));
        if p > REACH_TOL {
            cols.push(q / p);
            reachable.push(true);
        } else {
            cols.push(DVector::zeros(rows));
            reachable.push(false);
        }
    });
    let matrix = if cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    Ok(DynamicsMatrix {
        length,
        matrix,
        histories,
        reachable,
    })
}

fn collect(
    psr: &OperatorPsr,
    length: usize,
    x: DVector<f64>,
    obs: &mut Vec<usize>,
    acts: &mut Vec<usize>,
    f: &mut dyn FnMut(&[usize], &[usize], &DVector<f64>),
) {
    let k = obs.len();
    if k == length {
        f(obs, acts, &x);
        return;
    }
    for o in 0..psr.n_obs {
        for a in 0..psr.n_actions {
            obs.push(o);
            acts.push(a);
            collect(psr, length, &psr.operators[k][o][a] * &x, obs, acts, f);
            obs.pop();
            acts.pop();
        }
    }
}

/// `1 / ||K^+||_1` for a core matrix `K`.
pub fn regular_alpha_from_core(k: &DMatrix<f64>) -> f64 {
    1.0 / l1_operator_norm(&pinv(k, RANK_TOL))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Regularity {
    pub alpha: f64,
    /// Per history length `1..=H`.
    pub per_step_alpha: Vec<f64>,
    pub ranks: Vec<usize>,
    /// Chosen core-history columns per history length.
    pub core_columns: Vec<Vec<usize>>,
}

/// Regularity certificate from greedily pivoted core histories of each `D̄`.
pub fn check_regular(psr: &OperatorPsr, column_cap: usize) -> Result<Regularity> {
    let h_ = psr.horizon();
    let mut per_step_alpha = Vec::with_capacity(h_);
    let mut ranks = Vec::with_capacity(h_);
    let mut core_columns = Vec::with_capacity(h_);
    for length in 1..=h_ {
        let d = dynamics_matrix(psr, length, column_cap)?;
        let rank = numerical_rank(&d.matrix, RANK_TOL);
        if rank == 0 {
            return Err(GecError::Rank(format!("dynamics matrix for length {length} is zero")));
        }
        let cols = greedy_pivot_columns(&d.matrix, rank);
        if cols.len() != rank {
            return Err(GecError::Rank(format!("pivoting found {} of {rank} columns at length {length}", cols.len())));
        }
        let k = select_columns(&d.matrix, &cols);
        if numerical_rank(&k, RANK_TOL) != rank {
            return Err(GecError::Rank(format!("selected core columns lose rank at length {length}")));
        }
        per_step_alpha.push(regular_alpha_from_core(&k));
        ranks.push(rank);
        core_columns.push(cols);
    }
    let alpha = per_step_alpha.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Regularity {
        alpha,
        per_step_alpha,
        ranks,
        core_columns,
    })
}

/// Factorization `D̄ = K V` at one history length.
#[derive(Debug, Clone)]
pub struct DeltaWitness {
    pub length: usize,
    pub k: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// `||K||_1 ||V||_1`.
    pub bound: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PsrCertificate {
    /// Rank of `D̄` for history lengths `1..=H`.
    pub rank_per_step: Vec<usize>,
    pub d_psr: usize,
    pub alpha_regular: Option<f64>,
    pub alpha_generalized: Option<f64>,
    pub delta_bound: f64,
    #[serde(skip)]
    pub witnesses: Vec<DeltaWitness>,
}

/// Witness residual tolerance.
const WITNESS_TOL: f64 = 1e-8;

/// Ranks, regularity constants and a `delta_PSR` witness. With `latent` set, the
/// witness is `K = [P(t | s)]`, `V = [P(s | tau)]`; otherwise it is the pivoted-column
/// factorization `K = D̄[:, cols]`, `V = K^+ D̄`.
pub fn psr_rank_and_delta(psr: &OperatorPsr, latent: Option<&TabularPomdp>, column_cap: usize) -> Result<PsrCertificate> {
    let h_ = psr.horizon();
    let mut rank_per_step = Vec::with_capacity(h_);
    let mut witnesses = Vec::with_capacity(h_);
    for length in 1..=h_ {
        let d = dynamics_matrix(psr, length, column_cap)?;
        let rank = numerical_rank(&d.matrix, RANK_TOL);
        rank_per_step.push(rank);
        let (k, v) = match latent {
            Some(pomdp) => {
                let k = test_emission_matrix(pomdp, length, &psr.core.steps[length]);
                let cols: Vec<DVector<f64>> = d
                    .histories
                    .iter()
                    .zip(&d.reachable)
                    .map(|((obs, acts), &ok)| {
                        if ok {
                            latent_belief(pomdp, obs, acts)
                        } else {
                            Ok(DVector::zeros(pomdp.states))
                        }
                    })
                    .collect::<Result<_>>()?;
                (k, DMatrix::from_columns(&cols))
            }
            None => {
                let cols = greedy_pivot_columns(&d.matrix, rank);
                let k = select_columns(&d.matrix, &cols);
                let v = pinv(&k, RANK_TOL) * &d.matrix;
                (k, v)
            }
        };
        let residual = (&k * &v - &d.matrix).amax();
        if residual > WITNESS_TOL {
            return Err(GecError::Rank(format!(
                "delta witness residual {residual:.3e} at history length {length}"
            )));
        }
        let bound = l1_operator_norm(&k) * l1_operator_norm(&v);
        witnesses.push(DeltaWitness {
            length,
            k,
            v,
            bound,
            residual,
        });
    }
    let delta_bound = witnesses.iter().map(|w| w.bound).fold(0.0, f64::max);
    Ok(PsrCertificate {
        d_psr: rank_per_step.iter().copied().max().unwrap_or(0),
        rank_per_step,
        alpha_regular: check_regular(psr, column_cap).ok().map(|r| r.alpha),
        alpha_generalized: check_generalized_regular(psr, column_cap.saturating_mul(100)).ok().map(|g| g.alpha),
        delta_bound,
        witnesses,
    })
}

/// Law of the latent state the next core test starts from, given a history:
/// `s_L` when `L < H`, otherwise the final state `s_{H-1}`.
fn latent_belief(pomdp: &TabularPomdp, obs: &[usize], acts: &[usize]) -> Result<DVector<f64>> {
    let mut b = pomdp.initial.clone();
    for k in 0..obs.len() {
        b = pomdp.condition(k, &b, obs[k])?;
        if k + 1 < pomdp.horizon {
            b = pomdp.propagate(k, &b, acts[k]);
        }
    }
    Ok(DVector::from_vec(b))
}
