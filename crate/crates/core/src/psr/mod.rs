//! Observable-operator predictive state representations.

mod certify;
mod construct;
mod decoder;

pub use certify::{
    check_generalized_regular, check_regular, dynamics_matrix, psr_rank_and_delta,
    regular_alpha_from_core, DeltaWitness, DynamicsMatrix, GeneralizedRegularity, PsrCertificate,
    Regularity,
};
pub use construct::{
    latent_mdp_to_pomdp, psr_from_decodable_pomdp, psr_from_weakly_revealing_pomdp,
    test_emission_matrix,
};
pub use decoder::{verify_decoder, Decoder};

use crate::decision::{HistoryPolicy, ObservableModel, Trajectory};
use crate::error::{GecError, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// A test: observations `o_h..o_{h+W-1}` under actions `a_h..a_{h+W-2}`.
/// The empty test is the terminal dummy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoreTest {
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
}

impl CoreTest {
    pub fn dummy() -> Self {
        Self {
            observations: Vec::new(),
            actions: Vec::new(),
        }
    }

    pub fn is_dummy(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Core tests per step `0..=H`; the last step holds only the dummy test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreTestSet {
    pub steps: Vec<Vec<CoreTest>>,
}

impl CoreTestSet {
    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn len_at(&self, step: usize) -> usize {
        self.steps[step].len()
    }

    /// Distinct action sequences at `step`, in order of first appearance.
    pub fn action_sequences(&self, step: usize) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        for t in &self.steps[step] {
            if !out.contains(&t.actions) {
                out.push(t.actions.clone());
            }
        }
        out
    }

    /// `U_A`: the largest number of distinct action sequences at any step.
    pub fn u_a(&self) -> usize {
        (0..self.steps.len())
            .map(|k| self.action_sequences(k).len())
            .max()
            .unwrap_or(1)
    }

    /// `(O x A)^{min(m-1, H-1-k)} x O` at each step `k < H`, in lexicographic order.
    pub fn m_step(horizon: usize, n_obs: usize, n_actions: usize, m: usize) -> Self {
        let mut steps = Vec::with_capacity(horizon + 1);
        for k in 0..horizon {
            let w = (m.max(1) - 1).min(horizon - 1 - k) + 1;
            let count = (n_obs * n_actions).pow((w - 1) as u32) * n_obs;
            let mut tests = Vec::with_capacity(count);
            for idx in 0..count {
                // Decode idx in the mixed radix (O, A, O, A, ..., O), most significant first.
                let mut rest = idx;
                let mut digits = Vec::with_capacity(2 * w - 1);
                for pos in (0..2 * w - 1).rev() {
                    let base = if pos % 2 == 0 { n_obs } else { n_actions };
                    digits.push(rest % base);
                    rest /= base;
                }
                digits.reverse();
                tests.push(CoreTest {
                    observations: digits.iter().step_by(2).copied().collect(),
                    actions: digits.iter().skip(1).step_by(2).copied().collect(),
                });
            }
            steps.push(tests);
        }
        steps.push(vec![CoreTest::dummy()]);
        Self { steps }
    }

    pub fn validate(&self, n_obs: usize, n_actions: usize) -> Result<()> {
        if self.steps.is_empty() {
            return Err(GecError::InvalidModel("core test set has no steps".into()));
        }
        let h_ = self.horizon();
        if self.steps[h_] != vec![CoreTest::dummy()] {
            return Err(GecError::InvalidModel("the final core test set must be the single dummy test".into()));
        }
        for (k, tests) in self.steps[..h_].iter().enumerate() {
            if tests.is_empty() {
                return Err(GecError::InvalidModel(format!("no core tests at step {k}")));
            }
            for t in tests {
                if t.is_dummy() || t.actions.len() + 1 != t.observations.len() {
                    return Err(GecError::InvalidModel(format!("malformed core test at step {k}: {t:?}")));
                }
                if t.observations.len() > h_ - k {
                    return Err(GecError::InvalidModel(format!("core test at step {k} runs past the horizon")));
                }
                if t.observations.iter().any(|&o| o >= n_obs) || t.actions.iter().any(|&a| a >= n_actions) {
                    return Err(GecError::OutOfRange(format!("core test at step {k}: {t:?}")));
                }
            }
        }
        Ok(())
    }
}

/// A PSR given by `q0` and operators `M_k(o, a)` of shape `|U_{k+1}| x |U_k|`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPsr {
    pub core: CoreTestSet,
    pub n_obs: usize,
    pub n_actions: usize,
    pub q0: DVector<f64>,
    /// `operators[k][o][a]`.
    pub operators: Vec<Vec<Vec<DMatrix<f64>>>>,
    /// `rewards[k][o][a]`.
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// `normalizers[c][k]`: backward covectors along the constant completion `c`.
    normalizers: Vec<Vec<DVector<f64>>>,
}

/// Tolerance below which a prefix probability counts as zero.
pub const REACH_TOL: f64 = 1e-14;

impl OperatorPsr {
    pub fn new(
        core: CoreTestSet,
        n_obs: usize,
        n_actions: usize,
        q0: DVector<f64>,
        operators: Vec<Vec<Vec<DMatrix<f64>>>>,
        rewards: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        core.validate(n_obs, n_actions)?;
        let h_ = core.horizon();
        if h_ == 0 {
            return Err(GecError::InvalidModel("horizon must be positive".into()));
        }
        if q0.len() != core.len_at(0) {
            return Err(GecError::InvalidModel(format!("q0 has length {} != |U_1| = {}", q0.len(), core.len_at(0))));
        }
        if operators.len() != h_ {
            return Err(GecError::InvalidModel(format!("expected {h_} operator steps, found {}", operators.len())));
        }
        for (k, per_o) in operators.iter().enumerate() {
            if per_o.len() != n_obs || per_o.iter().any(|v| v.len() != n_actions) {
                return Err(GecError::InvalidModel(format!("operators at step {k} have the wrong (o, a) shape")));
            }
            for m in per_o.iter().flatten() {
                if m.nrows() != core.len_at(k + 1) || m.ncols() != core.len_at(k) {
                    return Err(GecError::InvalidModel(format!(
                        "operator at step {k} is {}x{}, expected {}x{}",
                        m.nrows(),
                        m.ncols(),
                        core.len_at(k + 1),
                        core.len_at(k)
                    )));
                }
            }
        }
        if rewards.len() != h_ || rewards.iter().any(|l| l.len() != n_obs || l.iter().any(|r| r.len() != n_actions)) {
            return Err(GecError::InvalidModel("rewards have the wrong shape".into()));
        }
        for (k, l) in rewards.iter().enumerate() {
            for (o, r) in l.iter().enumerate() {
                crate::decision::check_rewards(r, &format!("rewards[{k}][{o}]"))?;
            }
        }
        crate::decision::check_reward_budget(rewards.iter().map(|l| l.iter().flatten().copied().fold(0.0, f64::max)))?;
        let mut psr = Self {
            core,
            n_obs,
            n_actions,
            q0,
            operators,
            rewards,
            normalizers: Vec::new(),
        };
        psr.normalizers = (0..n_actions).map(|c| psr.compute_normalizers(c)).collect();
        Ok(psr)
    }

    fn compute_normalizers(&self, completion: usize) -> Vec<DVector<f64>> {
        let h_ = self.horizon();
        let mut n = vec![DVector::zeros(0); h_ + 1];
        n[h_] = DVector::from_element(1, 1.0);
        for k in (0..h_).rev() {
            let mut acc = DVector::zeros(self.core.len_at(k));
            for o in 0..self.n_obs {
                acc += self.operators[k][o][completion].tr_mul(&n[k + 1]);
            }
            n[k] = acc;
        }
        n
    }

    pub fn horizon(&self) -> usize {
        self.operators.len()
    }

    /// Normalizer covector at `step` for the canonical (all-zero) completion.
    pub fn normalizer(&self, step: usize) -> &DVector<f64> {
        &self.normalizers[0][step]
    }

    /// `q(tau_k)`: the unnormalized predictive vector after `k = obs.len()` steps.
    pub fn predictive_vector(&self, obs: &[usize], acts: &[usize]) -> DVector<f64> {
        let mut x = self.q0.clone();
        for (k, (&o, &a)) in obs.iter().zip(acts).enumerate() {
            x = &self.operators[k][o][a] * x;
        }
        x
    }

    /// `P(tau_k)` for a history of `k` observation-action pairs.
    pub fn prefix_probability(&self, obs: &[usize], acts: &[usize]) -> f64 {
        let k = obs.len();
        self.normalizer(k).dot(&self.predictive_vector(obs, acts))
    }

    /// `P(o_k | tau_{k-1}, do(action))` for the history `(obs, acts)` of length `k`.
    pub fn conditional_next_obs(&self, obs: &[usize], acts: &[usize], action: usize) -> Result<Vec<f64>> {
        self.conditional_next_obs_with(obs, acts, action, 0)
    }

    /// As [`Self::conditional_next_obs`] with normalizers built along the constant
    /// action completion `completion`.
    pub fn conditional_next_obs_with(&self, obs: &[usize], acts: &[usize], action: usize, completion: usize) -> Result<Vec<f64>> {
        if obs.len() != acts.len() || obs.len() >= self.horizon() {
            return Err(GecError::OutOfRange(format!("history of length {} for horizon {}", obs.len(), self.horizon())));
        }
        if completion >= self.n_actions || action >= self.n_actions {
            return Err(GecError::OutOfRange("action index".into()));
        }
        let x = self.predictive_vector(obs, acts);
        self.next_obs_from(obs.len(), &x, action, completion)
    }

    fn next_obs_from(&self, step: usize, x: &DVector<f64>, action: usize, completion: usize) -> Result<Vec<f64>> {
        let n = &self.normalizers[completion];
        let denom = n[step].dot(x);
        if !(denom > REACH_TOL) {
            return Err(GecError::UnreachableHistory);
        }
        let mut p: Vec<f64> = (0..self.n_obs)
            .map(|o| (n[step + 1].dot(&(&self.operators[step][o][action] * x)) / denom).clamp(0.0, 1.0))
            .map(|v| if v > 2.0 * REACH_TOL { v } else { 0.0 })
            .collect();
        let s: f64 = p.iter().sum();
        if !(s > 0.0) {
            return Err(GecError::UnreachableHistory);
        }
        p.iter_mut().for_each(|v| *v /= s);
        Ok(p)
    }

    /// Largest disagreement between the canonical completion and the all-last-action
    /// completion over every reachable history and action.
    pub fn completion_audit(&self) -> f64 {
        let alt = self.n_actions - 1;
        let mut worst: f64 = 0.0;
        let mut obs = Vec::new();
        let mut acts = Vec::new();
        self.audit_rec(0, self.q0.clone(), alt, &mut obs, &mut acts, &mut worst);
        worst
    }

    fn audit_rec(&self, step: usize, x: DVector<f64>, alt: usize, obs: &mut Vec<usize>, acts: &mut Vec<usize>, worst: &mut f64) {
        if step == self.horizon() {
            return;
        }
        for a in 0..self.n_actions {
            let (Ok(p), Ok(q)) = (self.next_obs_from(step, &x, a, 0), self.next_obs_from(step, &x, a, alt)) else {
                return;
            };
            for (u, v) in p.iter().zip(&q) {
                *worst = worst.max((u - v).abs());
            }
        }
        for o in 0..self.n_obs {
            for a in 0..self.n_actions {
                let y = &self.operators[step][o][a] * &x;
                obs.push(o);
                acts.push(a);
                self.audit_rec(step + 1, y, alt, obs, acts, worst);
                obs.pop();
                acts.pop();
            }
        }
    }

    /// `(M_H ... M_1 q0) * pi(tau_H)`, clamped to `[0, 1]`.
    pub fn trajectory_probability(&self, tau: &Trajectory, policy: &HistoryPolicy) -> Result<f64> {
        crate::decision::trajectory_probability(self, policy, tau)
    }
}

impl ObservableModel for OperatorPsr {
    fn horizon(&self) -> usize {
        self.operators.len()
    }
    fn num_obs(&self) -> usize {
        self.n_obs
    }
    fn num_actions(&self) -> usize {
        self.n_actions
    }
    fn reward(&self, step: usize, obs: usize, action: usize) -> f64 {
        self.rewards[step][obs][action]
    }

    fn dynamics_probability(&self, obs: &[usize], actions: &[usize]) -> f64 {
        let k = obs.len();
        if k == 0 {
            return 1.0;
        }
        let mut x = self.q0.clone();
        for j in 0..k {
            let a = actions.get(j).copied().unwrap_or(0);
            x = &self.operators[j][obs[j]][a] * x;
        }
        self.normalizer(k).dot(&x).clamp(0.0, 1.0)
    }

    fn initial_filter(&self) -> Vec<f64> {
        self.q0.iter().copied().collect()
    }

    fn next_obs_dist(&self, step: usize, filter: &[f64], action: usize) -> Result<Vec<f64>> {
        self.next_obs_from(step, &DVector::from_column_slice(filter), action, 0)
    }

    fn advance(&self, step: usize, filter: &[f64], obs: usize, action: usize) -> Result<Vec<f64>> {
        let y = &self.operators[step][obs][action] * DVector::from_column_slice(filter);
        let d = self.normalizer(step + 1).dot(&y);
        if !(d > REACH_TOL) {
            return Err(GecError::UnreachableHistory);
        }
        Ok((y / d).iter().copied().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m_step_core_sets() {
        let c = CoreTestSet::m_step(3, 2, 2, 2);
        assert_eq!(c.len_at(0), 8);
        assert_eq!(c.len_at(1), 8);
        assert_eq!(c.len_at(2), 2);
        assert_eq!(c.len_at(3), 1);
        assert_eq!(c.steps[0][0], CoreTest { observations: vec![0, 0], actions: vec![0] });
        assert_eq!(c.steps[0][1], CoreTest { observations: vec![0, 1], actions: vec![0] });
        assert_eq!(c.steps[0][2], CoreTest { observations: vec![0, 0], actions: vec![1] });
        assert_eq!(c.action_sequences(0), vec![vec![0], vec![1]]);
        assert_eq!(c.u_a(), 2);
        assert!(c.validate(2, 2).is_ok());
    }

    #[test]
    fn u_a_bounded_by_action_power() {
        for m in 1..=3 {
            let c = CoreTestSet::m_step(4, 2, 3, m);
            assert!(c.u_a() <= 3usize.pow(m as u32 - 1));
        }
    }

    #[test]
    fn one_step_scalar_psr() {
        let core = CoreTestSet {
            steps: vec![vec![CoreTest { observations: vec![0], actions: vec![] }], vec![CoreTest::dummy()]],
        };
        let psr = OperatorPsr::new(
            core,
            1,
            1,
            DVector::from_element(1, 1.0),
            vec![vec![vec![DMatrix::from_element(1, 1, 1.0)]]],
            vec![vec![vec![0.5]]],
        )
        .unwrap();
        assert_eq!(psr.dynamics_probability(&[0], &[0]), 1.0);
        assert_eq!(psr.conditional_next_obs(&[], &[], 0).unwrap(), vec![1.0]);
    }
}
