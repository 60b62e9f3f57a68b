use super::argmax_lowest;
use crate::error::{GecError, Result};
use serde::{Deserialize, Serialize};

/// A history-dependent policy. Every variant answers the same query: given the step
/// `h` (0-based), the observations `o_0..o_h` and the actions `a_0..a_{h-1}`, return
/// a distribution over actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HistoryPolicy {
    /// `table[h][o]` is the action distribution at step `h` after observing `o`.
    MarkovTable { table: Vec<Vec<Vec<f64>>> },
    /// `table[h][code]` where `code` is the mixed-radix code of the last `memory`
    /// observation-action pairs followed by the current observation.
    MemoryTable {
        memory: usize,
        n_obs: usize,
        n_actions: usize,
        table: Vec<Vec<Vec<f64>>>,
    },
    /// Greedy with respect to `q[h][o][a]`; ties go to the lowest action.
    GreedyOfQ { q: Vec<Vec<Vec<f64>>> },
    /// `base` with a uniform action at `uniform_step` and, from `sequence_start` on, an
    /// action sequence drawn uniformly from `sequences` (base resumes when it runs out).
    Composed {
        base: Box<HistoryPolicy>,
        n_actions: usize,
        uniform_step: Option<usize>,
        sequence_start: usize,
        sequences: Vec<Vec<usize>>,
    },
}

/// Number of distinct memory codes at `step`.
pub fn memory_table_len(memory: usize, n_obs: usize, n_actions: usize, step: usize) -> usize {
    (n_obs * n_actions).pow(step.min(memory) as u32) * n_obs
}

/// Mixed-radix code of the window `(o_{h-M}, a_{h-M}, ..., o_{h-1}, a_{h-1}, o_h)`,
/// truncated at the start of the episode.
pub fn memory_code(memory: usize, n_obs: usize, n_actions: usize, step: usize, obs: &[usize], acts: &[usize]) -> usize {
    let start = step.saturating_sub(memory);
    let mut code = 0;
    for k in start..step {
        code = code * n_obs * n_actions + obs[k] * n_actions + acts[k];
    }
    code * n_obs + obs[step]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplorationKind {
    QType,
    VType,
    PsrType,
}

impl HistoryPolicy {
    pub fn horizon(&self) -> usize {
        match self {
            Self::MarkovTable { table } | Self::MemoryTable { table, .. } => table.len(),
            Self::GreedyOfQ { q } => q.len(),
            Self::Composed { base, .. } => base.horizon(),
        }
    }

    /// Deterministic Markov policy from `actions[h][o]`.
    pub fn deterministic_markov(actions: &[Vec<usize>], n_actions: usize) -> Self {
        Self::MarkovTable {
            table: actions
                .iter()
                .map(|row| row.iter().map(|&a| one_hot(a, n_actions)).collect())
                .collect(),
        }
    }

    pub fn uniform(horizon: usize, n_obs: usize, n_actions: usize) -> Self {
        Self::MarkovTable {
            table: vec![vec![vec![1.0 / n_actions as f64; n_actions]; n_obs]; horizon],
        }
    }

    pub fn action_probs(&self, step: usize, obs: &[usize], acts: &[usize]) -> Vec<f64> {
        match self {
            Self::MarkovTable { table } => table[step][obs[step]].clone(),
            Self::MemoryTable {
                memory,
                n_obs,
                n_actions,
                table,
            } => table[step][memory_code(*memory, *n_obs, *n_actions, step, obs, acts)].clone(),
            Self::GreedyOfQ { q } => {
                let row = &q[step][obs[step]];
                one_hot(argmax_lowest(row), row.len())
            }
            Self::Composed {
                base,
                n_actions,
                uniform_step,
                sequence_start,
                sequences,
            } => {
                if *uniform_step == Some(step) {
                    return vec![1.0 / *n_actions as f64; *n_actions];
                }
                if step < *sequence_start || sequences.is_empty() {
                    return base.action_probs(step, obs, acts);
                }
                // Posterior over which sequence was drawn given the actions taken so far,
                // mixed with each sequence's prescription at this step.
                let j = step - sequence_start;
                let base_now = base.action_probs(step, obs, acts);
                let mut out = vec![0.0; *n_actions];
                let mut total = 0.0;
                for seq in sequences {
                    let mut w = 1.0;
                    for t in *sequence_start..step {
                        let k = t - sequence_start;
                        if k < seq.len() {
                            if acts[t] != seq[k] {
                                w = 0.0;
                                break;
                            }
                        } else {
                            w *= base.action_probs(t, obs, acts)[acts[t]];
                        }
                    }
                    if w == 0.0 {
                        continue;
                    }
                    total += w;
                    if j < seq.len() {
                        out[seq[j]] += w;
                    } else {
                        out.iter_mut().zip(&base_now).for_each(|(o, b)| *o += w * b);
                    }
                }
                if total == 0.0 {
                    return base_now;
                }
                out.iter_mut().for_each(|x| *x /= total);
                out
            }
        }
    }

    pub fn action_prob(&self, step: usize, obs: &[usize], acts: &[usize], action: usize) -> f64 {
        self.action_probs(step, obs, acts)[action]
    }

    /// `pi(tau_k)`: product of the policy's action probabilities along the first `k` steps.
    pub fn sequence_probability(&self, obs: &[usize], acts: &[usize], k: usize) -> f64 {
        let mut p = 1.0;
        for h in 0..k {
            p *= self.action_prob(h, obs, acts, acts[h]);
            if p == 0.0 {
                break;
            }
        }
        p
    }
}

fn one_hot(a: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[a] = 1.0;
    v
}

/// Exploration policy built from `base`.
///
/// - q-type returns `base`;
/// - v-type plays uniformly at 0-based `step` and follows `base` elsewhere;
/// - psr-type plays a uniformly drawn sequence from `sequences` starting at 0-based
///   `step`, preceded by a uniform action at `step - 1` when `step >= 1`.
pub fn compose_exploration(
    base: &HistoryPolicy,
    n_actions: usize,
    kind: ExplorationKind,
    step: usize,
    sequences: &[Vec<usize>],
) -> Result<HistoryPolicy> {
    let horizon = base.horizon();
    if step >= horizon {
        return Err(GecError::OutOfRange(format!("exploration step {step} with horizon {horizon}")));
    }
    match kind {
        ExplorationKind::QType => Ok(base.clone()),
        ExplorationKind::VType => Ok(HistoryPolicy::Composed {
            base: Box::new(base.clone()),
            n_actions,
            uniform_step: Some(step),
            sequence_start: horizon,
            sequences: Vec::new(),
        }),
        ExplorationKind::PsrType => {
            if sequences.is_empty() {
                return Err(GecError::Config("psr-type exploration needs at least one action sequence".into()));
            }
            if sequences.iter().flatten().any(|&a| a >= n_actions) {
                return Err(GecError::OutOfRange("action sequence entry".into()));
            }
            Ok(HistoryPolicy::Composed {
                base: Box::new(base.clone()),
                n_actions,
                uniform_step: step.checked_sub(1),
                sequence_start: step,
                sequences: sequences.to_vec(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> HistoryPolicy {
        HistoryPolicy::deterministic_markov(&[vec![1, 0], vec![0, 1], vec![1, 1]], 2)
    }

    #[test]
    fn memory_codes_are_dense() {
        let (m, o, a) = (1, 2, 3);
        let mut seen = std::collections::HashSet::new();
        for o0 in 0..o {
            for a0 in 0..a {
                for o1 in 0..o {
                    let c = memory_code(m, o, a, 1, &[o0, o1], &[a0]);
                    assert!(c < memory_table_len(m, o, a, 1));
                    seen.insert(c);
                }
            }
        }
        assert_eq!(seen.len(), memory_table_len(m, o, a, 1));
        assert_eq!(memory_code(m, o, a, 0, &[1], &[]), 1);
    }

    #[test]
    fn q_type_is_identity() {
        let b = base();
        let p = compose_exploration(&b, 2, ExplorationKind::QType, 1, &[]).unwrap();
        assert_eq!(p, b);
    }

    #[test]
    fn v_type_uniform_at_step() {
        let p = compose_exploration(&base(), 2, ExplorationKind::VType, 1, &[]).unwrap();
        assert_eq!(p.action_probs(1, &[0, 0], &[1]), vec![0.5, 0.5]);
        assert_eq!(p.action_probs(0, &[0], &[]), vec![0.0, 1.0]);
        assert_eq!(p.action_probs(2, &[0, 0, 0], &[1, 1]), vec![0.0, 1.0]);
    }

    #[test]
    fn psr_type_single_sequence_forces_actions() {
        let p = compose_exploration(&base(), 2, ExplorationKind::PsrType, 1, &[vec![0, 0]]).unwrap();
        assert_eq!(p.action_probs(0, &[0], &[]), vec![0.5, 0.5]);
        assert_eq!(p.action_probs(1, &[0, 1], &[0]), vec![1.0, 0.0]);
        assert_eq!(p.action_probs(2, &[0, 1, 1], &[0, 0]), vec![1.0, 0.0]);
    }

    #[test]
    fn psr_type_sequence_marginals() {
        let seqs = vec![vec![0, 1], vec![1, 1], vec![1, 0]];
        let p = compose_exploration(&base(), 2, ExplorationKind::PsrType, 1, &seqs).unwrap();
        let first = p.action_probs(1, &[0, 0], &[0]);
        assert!((first[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.action_probs(2, &[0, 0, 0], &[0, 0]), vec![0.0, 1.0]);
        assert_eq!(p.action_probs(2, &[0, 0, 0], &[0, 1]), vec![0.5, 0.5]);
    }

    #[test]
    fn out_of_range_step_is_rejected() {
        assert!(compose_exploration(&base(), 2, ExplorationKind::VType, 3, &[]).is_err());
        assert!(compose_exploration(&base(), 2, ExplorationKind::PsrType, 0, &[]).is_err());
    }
}
