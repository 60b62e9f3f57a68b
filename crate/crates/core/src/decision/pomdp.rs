use super::{
    check_distribution, check_reward_budget, check_rewards, model::normalize_filter,
    random_simplex, sample_index, HistoryPolicy, ObservableModel, TabularMdp, Trajectory,
};
use crate::error::{GecError, Result};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

/// Finite-horizon tabular POMDP with known rewards on observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPomdp {
    pub horizon: usize,
    pub states: usize,
    pub observations: usize,
    pub actions: usize,
    pub initial: Vec<f64>,
    /// `transitions[h][a][s][s']` for `h` in `0..horizon-1`.
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `emissions[h][s][o]`.
    pub emissions: Vec<Vec<Vec<f64>>>,
    /// `rewards[h][o][a]`.
    pub rewards: Vec<Vec<Vec<f64>>>,
}

impl TabularPomdp {
    pub fn validate(&self) -> Result<()> {
        let (h_, s_, o_, a_) = (self.horizon, self.states, self.observations, self.actions);
        if h_ == 0 || s_ == 0 || o_ == 0 || a_ == 0 {
            return Err(GecError::InvalidModel("all dimensions must be positive".into()));
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
            if layer.len() != a_ || layer.iter().any(|m| m.len() != s_) {
                return Err(GecError::InvalidModel(format!("transitions[{h}] has the wrong shape")));
            }
            for (a, m) in layer.iter().enumerate() {
                for (s, row) in m.iter().enumerate() {
                    if row.len() != s_ {
                        return Err(GecError::InvalidModel(format!("transitions[{h}][{a}][{s}] has length {}", row.len())));
                    }
                    check_distribution(row, &format!("transitions[{h}][{a}][{s}]"))?;
                }
            }
        }
        if self.emissions.len() != h_ {
            return Err(GecError::InvalidModel(format!("expected {h_} emission layers")));
        }
        for (h, layer) in self.emissions.iter().enumerate() {
            if layer.len() != s_ {
                return Err(GecError::InvalidModel(format!("emissions[{h}] has {} states", layer.len())));
            }
            for (s, row) in layer.iter().enumerate() {
                if row.len() != o_ {
                    return Err(GecError::InvalidModel(format!("emissions[{h}][{s}] has length {}", row.len())));
                }
                check_distribution(row, &format!("emissions[{h}][{s}]"))?;
            }
        }
        if self.rewards.len() != h_ {
            return Err(GecError::InvalidModel(format!("expected {h_} reward layers")));
        }
        for (h, layer) in self.rewards.iter().enumerate() {
            if layer.len() != o_ || layer.iter().any(|r| r.len() != a_) {
                return Err(GecError::InvalidModel(format!("rewards[{h}] has the wrong shape")));
            }
            for (o, r) in layer.iter().enumerate() {
                check_rewards(r, &format!("rewards[{h}][{o}]"))?;
            }
        }
        check_reward_budget(
            self.rewards
                .iter()
                .map(|l| l.iter().flatten().copied().fold(0.0, f64::max)),
        )
    }

    /// The POMDP whose emission reveals the MDP state.
    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        let s_ = mdp.states;
        let transitions = mdp
            .transitions
            .iter()
            .map(|layer| {
                (0..mdp.actions)
                    .map(|a| (0..s_).map(|s| layer[s][a].clone()).collect())
                    .collect()
            })
            .collect();
        let eye: Vec<Vec<f64>> = (0..s_)
            .map(|s| (0..s_).map(|o| if o == s { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            horizon: mdp.horizon,
            states: s_,
            observations: s_,
            actions: mdp.actions,
            initial: mdp.initial.clone(),
            transitions,
            emissions: vec![eye; mdp.horizon],
            rewards: mdp.rewards.clone(),
        }
    }

    /// Random instance with Dirichlet(1) rows and rewards uniform on `[0, 1/H]`.
    pub fn random<R: Rng + ?Sized>(
        states: usize,
        observations: usize,
        actions: usize,
        horizon: usize,
        rng: &mut R,
    ) -> Self {
        let transitions = (0..horizon.saturating_sub(1))
            .map(|_| {
                (0..actions)
                    .map(|_| (0..states).map(|_| random_simplex(states, rng)).collect())
                    .collect()
            })
            .collect();
        let emissions = (0..horizon)
            .map(|_| (0..states).map(|_| random_simplex(observations, rng)).collect())
            .collect();
        let rewards = (0..horizon)
            .map(|_| {
                (0..observations)
                    .map(|_| (0..actions).map(|_| rng.random::<f64>() / horizon as f64).collect())
                    .collect()
            })
            .collect();
        Self {
            horizon,
            states,
            observations,
            actions,
            initial: random_simplex(states, rng),
            transitions,
            emissions,
            rewards,
        }
    }

    /// `P(o_h = o_0, ..., o_{h+k} = o_k | s_h = state, do(a_0..a_{k-1}))`.
    pub fn test_probability_from_state(&self, step: usize, state: usize, obs: &[usize], actions: &[usize]) -> f64 {
        let mut alpha = vec![0.0; self.states];
        alpha[state] = 1.0;
        self.forward_from(step, alpha, obs, actions)
    }

    fn forward_from(&self, step: usize, mut alpha: Vec<f64>, obs: &[usize], actions: &[usize]) -> f64 {
        for (k, &o) in obs.iter().enumerate() {
            let h = step + k;
            for (s, x) in alpha.iter_mut().enumerate() {
                *x *= self.emissions[h][s][o];
            }
            if k + 1 < obs.len() {
                let t = &self.transitions[h][actions[k]];
                let mut next = vec![0.0; self.states];
                for (s, &x) in alpha.iter().enumerate() {
                    if x != 0.0 {
                        for (n, &p) in next.iter_mut().zip(&t[s]) {
                            *n += x * p;
                        }
                    }
                }
                alpha = next;
            }
        }
        alpha.iter().sum()
    }

    /// Posterior over the latent state at `step` after also observing `obs` there.
    pub fn condition(&self, step: usize, prior: &[f64], obs: usize) -> Result<Vec<f64>> {
        normalize_filter(
            prior
                .iter()
                .enumerate()
                .map(|(s, &b)| b * self.emissions[step][s][obs])
                .collect(),
        )
    }

    /// Push a state distribution at `step` through the transition of `action`.
    pub fn propagate(&self, step: usize, dist: &[f64], action: usize) -> Vec<f64> {
        let t = &self.transitions[step][action];
        let mut next = vec![0.0; self.states];
        for (s, &x) in dist.iter().enumerate() {
            for (n, &p) in next.iter_mut().zip(&t[s]) {
                *n += x * p;
            }
        }
        next
    }
}

impl ObservableModel for TabularPomdp {
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn num_obs(&self) -> usize {
        self.observations
    }
    fn num_actions(&self) -> usize {
        self.actions
    }
    fn reward(&self, step: usize, obs: usize, action: usize) -> f64 {
        self.rewards[step][obs][action]
    }

    fn dynamics_probability(&self, obs: &[usize], actions: &[usize]) -> f64 {
        self.forward_from(0, self.initial.clone(), obs, actions)
    }

    fn initial_filter(&self) -> Vec<f64> {
        self.initial.clone()
    }

    fn next_obs_dist(&self, step: usize, filter: &[f64], _action: usize) -> Result<Vec<f64>> {
        let mut p = vec![0.0; self.observations];
        for (s, &b) in filter.iter().enumerate() {
            for (x, &e) in p.iter_mut().zip(&self.emissions[step][s]) {
                *x += b * e;
            }
        }
        Ok(p)
    }

    fn advance(&self, step: usize, filter: &[f64], obs: usize, action: usize) -> Result<Vec<f64>> {
        let post = self.condition(step, filter, obs)?;
        Ok(self.propagate(step, &post, action))
    }

    fn sample_with(&self, policy: &HistoryPolicy, rng: &mut dyn RngCore) -> Result<Trajectory> {
        let mut obs = Vec::with_capacity(self.horizon + 1);
        let mut acts = Vec::with_capacity(self.horizon);
        let mut rewards = Vec::with_capacity(self.horizon);
        let mut s = sample_index(&self.initial, rng);
        for h in 0..self.horizon {
            let o = sample_index(&self.emissions[h][s], rng);
            obs.push(o);
            let a = sample_index(&policy.action_probs(h, &obs, &acts), rng);
            acts.push(a);
            rewards.push(self.rewards[h][o][a]);
            if h + 1 < self.horizon {
                s = sample_index(&self.transitions[h][a][s], rng);
            }
        }
        obs.push(self.observations);
        Ok(Trajectory {
            observations: obs,
            actions: acts,
            rewards,
        })
    }
}
