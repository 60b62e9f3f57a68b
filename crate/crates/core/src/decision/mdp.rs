use super::{
    check_distribution, check_reward_budget, check_rewards, model::normalize_filter,
    random_simplex, sample_index, HistoryPolicy, ObservableModel, Trajectory,
};
use crate::error::{GecError, Result};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

/// Finite-horizon tabular MDP. Observations are the states themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    pub horizon: usize,
    pub states: usize,
    pub actions: usize,
    /// `transitions[h][s][a][s']` for `h` in `0..horizon-1`.
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `rewards[h][s][a]`.
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub initial: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        horizon: usize,
        states: usize,
        actions: usize,
        transitions: Vec<Vec<Vec<Vec<f64>>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let m = Self {
            horizon,
            states,
            actions,
            transitions,
            rewards,
            initial,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let (h_, s_, a_) = (self.horizon, self.states, self.actions);
        if h_ == 0 || s_ == 0 || a_ == 0 {
            return Err(GecError::InvalidModel("horizon, states and actions must be positive".into()));
        }
        if self.initial.len() != s_ {
            return Err(GecError::InvalidModel(format!("initial has length {} != {s_}", self.initial.len())));
        }
        check_distribution(&self.initial, "initial")?;
        if self.transitions.len() != h_ - 1 {
            return Err(GecError::InvalidModel(format!(
                "expected {} transition layers, found {}",
                h_ - 1,
                self.transitions.len()
            )));
        }
        for (h, layer) in self.transitions.iter().enumerate() {
            if layer.len() != s_ {
                return Err(GecError::InvalidModel(format!("transitions[{h}] has {} states", layer.len())));
            }
            for (s, per_a) in layer.iter().enumerate() {
                if per_a.len() != a_ {
                    return Err(GecError::InvalidModel(format!("transitions[{h}][{s}] has {} actions", per_a.len())));
                }
                for (a, row) in per_a.iter().enumerate() {
                    if row.len() != s_ {
                        return Err(GecError::InvalidModel(format!("transitions[{h}][{s}][{a}] has length {}", row.len())));
                    }
                    check_distribution(row, &format!("transitions[{h}][{s}][{a}]"))?;
                }
            }
        }
        if self.rewards.len() != h_ {
            return Err(GecError::InvalidModel(format!("expected {h_} reward layers")));
        }
        for (h, layer) in self.rewards.iter().enumerate() {
            if layer.len() != s_ || layer.iter().any(|r| r.len() != a_) {
                return Err(GecError::InvalidModel(format!("rewards[{h}] has the wrong shape")));
            }
            for (s, r) in layer.iter().enumerate() {
                check_rewards(r, &format!("rewards[{h}][{s}]"))?;
            }
        }
        check_reward_budget(
            self.rewards
                .iter()
                .map(|l| l.iter().flatten().copied().fold(0.0, f64::max)),
        )
    }

    /// Random instance: Dirichlet(1) rows and rewards uniform on `[0, 1/H]`.
    pub fn random<R: Rng + ?Sized>(states: usize, actions: usize, horizon: usize, rng: &mut R) -> Self {
        let transitions = (0..horizon.saturating_sub(1))
            .map(|_| {
                (0..states)
                    .map(|_| (0..actions).map(|_| random_simplex(states, rng)).collect())
                    .collect()
            })
            .collect();
        let rewards = (0..horizon)
            .map(|_| {
                (0..states)
                    .map(|_| (0..actions).map(|_| rng.random::<f64>() / horizon as f64).collect())
                    .collect()
            })
            .collect();
        Self {
            horizon,
            states,
            actions,
            transitions,
            rewards,
            initial: random_simplex(states, rng),
        }
    }

    /// `P_h(. | s, a)`.
    pub fn next_state_dist(&self, step: usize, state: usize, action: usize) -> &[f64] {
        &self.transitions[step][state][action]
    }
}

impl ObservableModel for TabularMdp {
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn num_obs(&self) -> usize {
        self.states
    }
    fn num_actions(&self) -> usize {
        self.actions
    }
    fn reward(&self, step: usize, obs: usize, action: usize) -> f64 {
        self.rewards[step][obs][action]
    }

    fn dynamics_probability(&self, obs: &[usize], actions: &[usize]) -> f64 {
        let Some(&first) = obs.first() else { return 1.0 };
        let mut p = self.initial[first];
        for k in 1..obs.len() {
            if p == 0.0 {
                return 0.0;
            }
            p *= self.transitions[k - 1][obs[k - 1]][actions[k - 1]][obs[k]];
        }
        p
    }

    fn initial_filter(&self) -> Vec<f64> {
        self.initial.clone()
    }

    fn next_obs_dist(&self, _step: usize, filter: &[f64], _action: usize) -> Result<Vec<f64>> {
        Ok(filter.to_vec())
    }

    fn advance(&self, step: usize, filter: &[f64], obs: usize, action: usize) -> Result<Vec<f64>> {
        if filter[obs] <= 0.0 {
            return Err(GecError::UnreachableHistory);
        }
        normalize_filter(self.transitions[step][obs][action].clone())
    }

    fn sample_with(&self, policy: &HistoryPolicy, rng: &mut dyn RngCore) -> Result<Trajectory> {
        let mut obs = Vec::with_capacity(self.horizon + 1);
        let mut acts = Vec::with_capacity(self.horizon);
        let mut rewards = Vec::with_capacity(self.horizon);
        let mut s = sample_index(&self.initial, rng);
        for h in 0..self.horizon {
            obs.push(s);
            let a = sample_index(&policy.action_probs(h, &obs, &acts), rng);
            acts.push(a);
            rewards.push(self.rewards[h][s][a]);
            if h + 1 < self.horizon {
                s = sample_index(&self.transitions[h][s][a], rng);
            }
        }
        obs.push(self.states);
        Ok(Trajectory {
            observations: obs,
            actions: acts,
            rewards,
        })
    }
}
