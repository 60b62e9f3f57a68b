use crate::decision::{argmax_lowest, memory_code, memory_table_len, HistoryPolicy, ObservableModel, TabularMdp};
use crate::error::{GecError, Result};

/// Default cap on history-tree nodes for exact planning.
pub const HISTORY_NODE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MdpSolution {
    /// `values[h][s]` for `h` in `0..=H` (the last row is zero).
    pub values: Vec<Vec<f64>>,
    /// `q[h][s][a]`.
    pub q: Vec<Vec<Vec<f64>>>,
    /// Greedy actions `policy[h][s]`, ties to the lowest index.
    pub policy: Vec<Vec<usize>>,
    /// `E_{s ~ initial} V_0(s)`.
    pub value: f64,
}

impl MdpSolution {
    pub fn history_policy(&self) -> HistoryPolicy {
        HistoryPolicy::GreedyOfQ { q: self.q.clone() }
    }
}

/// Backward induction on the Bellman optimality equation.
pub fn plan_mdp(mdp: &TabularMdp) -> MdpSolution {
    let (h_, s_, a_) = (mdp.horizon, mdp.states, mdp.actions);
    let mut values = vec![vec![0.0; s_]; h_ + 1];
    let mut q = vec![vec![vec![0.0; a_]; s_]; h_];
    let mut policy = vec![vec![0; s_]; h_];
    for h in (0..h_).rev() {
        for s in 0..s_ {
            for a in 0..a_ {
                let mut v = mdp.rewards[h][s][a];
                if h + 1 < h_ {
                    v += mdp.transitions[h][s][a].iter().zip(&values[h + 1]).map(|(p, x)| p * x).sum::<f64>();
                }
                q[h][s][a] = v;
            }
            let best = argmax_lowest(&q[h][s]);
            policy[h][s] = best;
            values[h][s] = q[h][s][best];
        }
    }
    let value = mdp.initial.iter().zip(&values[0]).map(|(p, v)| p * v).sum();
    MdpSolution {
        values,
        q,
        policy,
        value,
    }
}

/// Exact value of a deterministic Markov policy `actions[h][s]` in an MDP.
pub fn evaluate_markov_mdp(mdp: &TabularMdp, actions: &[Vec<usize>]) -> f64 {
    let (h_, s_) = (mdp.horizon, mdp.states);
    let mut v = vec![0.0; s_];
    for h in (0..h_).rev() {
        v = (0..s_)
            .map(|s| {
                let a = actions[h][s];
                let mut x = mdp.rewards[h][s][a];
                if h + 1 < h_ {
                    x += mdp.transitions[h][s][a].iter().zip(&v).map(|(p, y)| p * y).sum::<f64>();
                }
                x
            })
            .collect();
    }
    mdp.initial.iter().zip(&v).map(|(p, x)| p * x).sum()
}

/// Exact optimal history-dependent policy by dynamic programming over the history tree.
/// Returns the optimal value and a deterministic full-memory policy.
pub fn plan_history_tree(model: &(impl ObservableModel + ?Sized), node_cap: usize) -> Result<(f64, HistoryPolicy)> {
    let (h_, o_, a_) = (model.horizon(), model.num_obs(), model.num_actions());
    let mut nodes = 0usize;
    for k in 0..h_ {
        nodes = nodes.saturating_add(memory_table_len(h_, o_, a_, k));
    }
    if nodes > node_cap {
        return Err(GecError::TooLarge(format!(
            "instance too large for exact planning: {nodes} history nodes exceed the cap of {node_cap}"
        )));
    }
    let mut table: Vec<Vec<Vec<f64>>> = (0..h_)
        .map(|k| {
            let mut first = vec![0.0; a_];
            first[0] = 1.0;
            vec![first; memory_table_len(h_, o_, a_, k)]
        })
        .collect();
    let mut obs = Vec::with_capacity(h_);
    let mut acts = Vec::with_capacity(h_);
    let value = tree_rec(model, 0, &model.initial_filter(), &mut obs, &mut acts, &mut table)?;
    Ok((
        value,
        HistoryPolicy::MemoryTable {
            memory: h_,
            n_obs: o_,
            n_actions: a_,
            table,
        },
    ))
}

fn tree_rec(
    model: &(impl ObservableModel + ?Sized),
    k: usize,
    filter: &[f64],
    obs: &mut Vec<usize>,
    acts: &mut Vec<usize>,
    table: &mut [Vec<Vec<f64>>],
) -> Result<f64> {
    let (h_, o_, a_) = (model.horizon(), model.num_obs(), model.num_actions());
    let dist = model.next_obs_dist(k, filter, 0)?;
    let mut v = 0.0;
    for (o, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        obs.push(o);
        let mut qs = Vec::with_capacity(a_);
        for a in 0..a_ {
            let mut q = model.reward(k, o, a);
            if k + 1 < h_ {
                let next = model.advance(k, filter, o, a)?;
                acts.push(a);
                q += tree_rec(model, k + 1, &next, obs, acts, table)?;
                acts.pop();
            }
            qs.push(q);
        }
        let best = argmax_lowest(&qs);
        let code = memory_code(h_, o_, a_, k, obs, acts);
        table[k][code].iter_mut().enumerate().for_each(|(a, x)| *x = if a == best { 1.0 } else { 0.0 });
        v += p * qs[best];
        obs.pop();
    }
    Ok(v)
}
