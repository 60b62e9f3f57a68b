use super::classes::HypothesisClass;
use crate::decision::{argmax_lowest, memory_code, memory_table_len, HistoryPolicy, TabularPomdp};
use crate::error::{GecError, Result};
use crate::linalg::{numerical_rank, pinv, RANK_TOL};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Observable value surrogate `g_h(z̄_h)` indexed by memory codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkFunction {
    pub memory: usize,
    pub n_obs: usize,
    pub n_actions: usize,
    /// `tables[h][code]` with `code` as in [`memory_code`].
    pub tables: Vec<Vec<f64>>,
}

impl LinkFunction {
    /// `g_h(z̄_h)`; zero at `h = H`.
    pub fn value(&self, step: usize, obs: &[usize], acts: &[usize]) -> f64 {
        match self.tables.get(step) {
            Some(t) => t[memory_code(self.memory, self.n_obs, self.n_actions, step, obs, acts)],
            None => 0.0,
        }
    }

    pub fn zeros(memory: usize, n_obs: usize, n_actions: usize, horizon: usize) -> Self {
        Self {
            memory,
            n_obs,
            n_actions,
            tables: (0..horizon).map(|k| vec![0.0; memory_table_len(memory, n_obs, n_actions, k)]).collect(),
        }
    }
}

/// Memory length of a table policy (0 for Markov and greedy policies).
pub fn policy_memory(policy: &HistoryPolicy) -> Option<usize> {
    match policy {
        HistoryPolicy::MemoryTable { memory, .. } => Some(*memory),
        HistoryPolicy::MarkovTable { .. } | HistoryPolicy::GreedyOfQ { .. } => Some(0),
        HistoryPolicy::Composed { .. } => None,
    }
}

fn row_at(policy: &HistoryPolicy, step: usize, code: usize, obs: usize) -> Vec<f64> {
    match policy {
        HistoryPolicy::MemoryTable { table, .. } => table[step][code].clone(),
        HistoryPolicy::MarkovTable { table } => table[step][obs].clone(),
        HistoryPolicy::GreedyOfQ { q } => {
            let row = &q[step][obs];
            let mut v = vec![0.0; row.len()];
            v[argmax_lowest(row)] = 1.0;
            v
        }
        HistoryPolicy::Composed { .. } => unreachable!("composed policies have no finite memory table"),
    }
}

fn next_window(memory: usize, n_obs: usize, n_actions: usize, step: usize, z: usize, o: usize, a: usize) -> usize {
    if memory == 0 {
        return 0;
    }
    let pair = o * n_actions + a;
    let radix = n_obs * n_actions;
    if step < memory {
        z * radix + pair
    } else {
        (z % radix.pow(memory as u32 - 1)) * radix + pair
    }
}

/// `V_h^pi(z_{h-1}, s_h)` for every window code and latent state, `h` in `0..=H`.
pub fn memory_values(pomdp: &TabularPomdp, policy: &HistoryPolicy) -> Result<Vec<Vec<Vec<f64>>>> {
    let memory = policy_memory(policy).ok_or_else(|| GecError::Config("policy has no finite memory".into()))?;
    let (h_, s_, o_, a_) = (pomdp.horizon, pomdp.states, pomdp.observations, pomdp.actions);
    let windows = |k: usize| (o_ * a_).pow(k.min(memory) as u32);
    let mut v: Vec<Vec<Vec<f64>>> = (0..=h_).map(|k| vec![vec![0.0; s_]; if k < h_ { windows(k) } else { 1 }]).collect();
    for k in (0..h_).rev() {
        for z in 0..windows(k) {
            for s in 0..s_ {
                let mut total = 0.0;
                for o in 0..o_ {
                    let e = pomdp.emissions[k][s][o];
                    if e == 0.0 {
                        continue;
                    }
                    let pa = row_at(policy, k, z * o_ + o, o);
                    for (a, &p) in pa.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        let mut q = pomdp.rewards[k][o][a];
                        if k + 1 < h_ {
                            let z2 = next_window(memory, o_, a_, k, z, o, a);
                            q += pomdp.transitions[k][a][s].iter().zip(&v[k + 1][z2]).map(|(t, x)| t * x).sum::<f64>();
                        }
                        total += e * p * q;
                    }
                }
                v[k][z][s] = total;
            }
        }
    }
    Ok(v)
}

/// Exact value of a finite-memory policy.
pub fn memory_policy_value(pomdp: &TabularPomdp, policy: &HistoryPolicy) -> Result<f64> {
    let v = memory_values(pomdp, policy)?;
    Ok(pomdp.initial.iter().zip(&v[0][0]).map(|(p, x)| p * x).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSolution {
    pub link: LinkFunction,
    /// `max |E[g_h(z̄_h) | z_{h-1}, s_h] - V_h^pi(z_{h-1}, s_h)|`.
    pub residual: f64,
}

/// Minimum-norm solution of `sum_o O_h(o|s) g_h(z, o) = V_h^pi(z, s)` for each window.
pub fn solve_link_function(pomdp: &TabularPomdp, policy: &HistoryPolicy) -> Result<LinkSolution> {
    let memory = policy_memory(policy).ok_or_else(|| GecError::Config("policy has no finite memory".into()))?;
    let (h_, s_, o_, a_) = (pomdp.horizon, pomdp.states, pomdp.observations, pomdp.actions);
    let v = memory_values(pomdp, policy)?;
    let mut link = LinkFunction::zeros(memory, o_, a_, h_);
    let mut residual: f64 = 0.0;
    for k in 0..h_ {
        // Rows indexed by states, columns by observations.
        let et = DMatrix::from_fn(s_, o_, |s, o| pomdp.emissions[k][s][o]);
        if numerical_rank(&et, RANK_TOL) < s_ {
            return Err(GecError::LinkConstruction(format!("emission matrix at step {k} has rank below {s_}")));
        }
        let inv = pinv(&et, RANK_TOL);
        for (z, vz) in v[k].iter().enumerate() {
            let target = DVector::from_column_slice(vz);
            let g = &inv * &target;
            residual = residual.max((&et * &g - &target).amax());
            for o in 0..o_ {
                link.tables[k][z * o_ + o] = g[o];
            }
        }
    }
    if residual > 1e-8 {
        return Err(GecError::LinkConstruction(format!("link equation residual {residual:.3e}")));
    }
    Ok(LinkSolution { link, residual })
}

/// A PO-bilinear hypothesis `(pi, g)` with cached `V_f = E[g_1(o_1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoBilinearHypothesis {
    pub policy: HistoryPolicy,
    pub link: LinkFunction,
    pub value: f64,
}

impl PoBilinearHypothesis {
    pub fn new(policy: HistoryPolicy, link: LinkFunction, pomdp: &TabularPomdp) -> Self {
        let value = first_obs_law(pomdp).iter().enumerate().map(|(o, p)| p * link.tables[0][o]).sum();
        Self { policy, link, value }
    }
}

pub fn first_obs_law(pomdp: &TabularPomdp) -> Vec<f64> {
    (0..pomdp.observations)
        .map(|o| (0..pomdp.states).map(|s| pomdp.initial[s] * pomdp.emissions[0][s][o]).sum())
        .collect()
}

/// Deterministic memory-`M` policy from one action per (step, code).
pub fn memory_policy_from_actions(memory: usize, n_obs: usize, n_actions: usize, actions: &[Vec<usize>]) -> HistoryPolicy {
    HistoryPolicy::MemoryTable {
        memory,
        n_obs,
        n_actions,
        table: actions
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&a| {
                        let mut v = vec![0.0; n_actions];
                        v[a] = 1.0;
                        v
                    })
                    .collect()
            })
            .collect(),
    }
}

/// Best deterministic memory-`M` policy by exhaustive enumeration.
pub fn best_memory_policy(pomdp: &TabularPomdp, memory: usize, cap: usize) -> Result<(f64, HistoryPolicy)> {
    let (h_, o_, a_) = (pomdp.horizon, pomdp.observations, pomdp.actions);
    let sizes: Vec<usize> = (0..h_).map(|k| memory_table_len(memory, o_, a_, k)).collect();
    let slots: usize = sizes.iter().sum();
    let count = (a_ as f64).powi(slots as i32);
    if count > cap as f64 {
        return Err(GecError::TooLarge(format!("{count} deterministic memory policies exceed the cap of {cap}")));
    }
    let mut digits = vec![0usize; slots];
    let mut best: Option<(f64, HistoryPolicy)> = None;
    loop {
        let mut it = digits.iter().copied();
        let actions: Vec<Vec<usize>> = sizes.iter().map(|&n| it.by_ref().take(n).collect()).collect();
        let policy = memory_policy_from_actions(memory, o_, a_, &actions);
        let v = memory_policy_value(pomdp, &policy)?;
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, policy));
        }
        // Odometer increment; the last slot varies fastest.
        let mut i = slots;
        loop {
            if i == 0 {
                return Ok(best.expect("at least one policy"));
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < a_ {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Random deterministic memory-`M` policy.
pub fn random_memory_policy<R: Rng + ?Sized>(memory: usize, n_obs: usize, n_actions: usize, horizon: usize, rng: &mut R) -> HistoryPolicy {
    let actions: Vec<Vec<usize>> = (0..horizon)
        .map(|k| (0..memory_table_len(memory, n_obs, n_actions, k)).map(|_| rng.random_range(0..n_actions)).collect())
        .collect();
    memory_policy_from_actions(memory, n_obs, n_actions, &actions)
}

/// `Pi x G` where `Pi` holds the best memory-`M` policy plus `n_policies - 1` random
/// ones and `G` holds the link function of every policy in `Pi`. The truth is
/// `(pi*, g^{pi*})` at index 0.
pub fn make_pobilinear_class<R: Rng + ?Sized>(
    pomdp: &TabularPomdp,
    memory: usize,
    n_policies: usize,
    enumeration_cap: usize,
    rng: &mut R,
) -> Result<HypothesisClass<PoBilinearHypothesis>> {
    if n_policies == 0 {
        return Err(GecError::Config("need at least one policy".into()));
    }
    let (_, best) = best_memory_policy(pomdp, memory, enumeration_cap)?;
    let mut policies = vec![best];
    while policies.len() < n_policies {
        let p = random_memory_policy(memory, pomdp.observations, pomdp.actions, pomdp.horizon, rng);
        if !policies.contains(&p) {
            policies.push(p);
        }
    }
    let links: Vec<LinkFunction> = policies
        .iter()
        .map(|p| solve_link_function(pomdp, p).map(|s| s.link))
        .collect::<Result<_>>()?;
    let mut hyps = Vec::with_capacity(policies.len() * links.len());
    for p in &policies {
        for g in &links {
            hyps.push(PoBilinearHypothesis::new(p.clone(), g.clone(), pomdp));
        }
    }
    HypothesisClass::uniform(hyps, 0)
}
