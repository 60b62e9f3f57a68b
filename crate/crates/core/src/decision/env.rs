use super::{HistoryPolicy, ObservableModel, TabularMdp, TabularPomdp, Trajectory};
use crate::error::Result;
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// A true environment: either fully or partially observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Environment {
    Mdp(TabularMdp),
    Pomdp(TabularPomdp),
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Mdp(m) => m.validate(),
            Self::Pomdp(p) => p.validate(),
        }
    }

    fn inner(&self) -> &dyn ObservableModel {
        match self {
            Self::Mdp(m) => m,
            Self::Pomdp(p) => p,
        }
    }

    /// The environment as a POMDP (identity emission for MDPs).
    pub fn to_pomdp(&self) -> TabularPomdp {
        match self {
            Self::Mdp(m) => TabularPomdp::from_mdp(m),
            Self::Pomdp(p) => p.clone(),
        }
    }
}

impl ObservableModel for Environment {
    fn horizon(&self) -> usize {
        self.inner().horizon()
    }
    fn num_obs(&self) -> usize {
        self.inner().num_obs()
    }
    fn num_actions(&self) -> usize {
        self.inner().num_actions()
    }
    fn reward(&self, step: usize, obs: usize, action: usize) -> f64 {
        self.inner().reward(step, obs, action)
    }
    fn dynamics_probability(&self, obs: &[usize], actions: &[usize]) -> f64 {
        self.inner().dynamics_probability(obs, actions)
    }
    fn initial_filter(&self) -> Vec<f64> {
        self.inner().initial_filter()
    }
    fn next_obs_dist(&self, step: usize, filter: &[f64], action: usize) -> Result<Vec<f64>> {
        self.inner().next_obs_dist(step, filter, action)
    }
    fn advance(&self, step: usize, filter: &[f64], obs: usize, action: usize) -> Result<Vec<f64>> {
        self.inner().advance(step, filter, obs, action)
    }
    fn sample_with(&self, policy: &HistoryPolicy, rng: &mut dyn RngCore) -> Result<Trajectory> {
        self.inner().sample_with(policy, rng)
    }
}
