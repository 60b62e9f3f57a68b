use crate::error::{GecError, Result};
use serde::{Deserialize, Serialize};

/// One episode: `observations` has length `H+1` with the terminal dummy index
/// (equal to the number of observations) in the last slot; `actions` and `rewards`
/// have length `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// The observations actually emitted (without the dummy).
    pub fn emitted(&self) -> &[usize] {
        &self.observations[..self.horizon()]
    }

    pub fn validate(&self, horizon: usize, n_obs: usize, n_actions: usize) -> Result<()> {
        if self.actions.len() != horizon
            || self.rewards.len() != horizon
            || self.observations.len() != horizon + 1
        {
            return Err(GecError::Config(format!(
                "trajectory lengths ({}, {}, {}) inconsistent with horizon {horizon}",
                self.observations.len(),
                self.actions.len(),
                self.rewards.len()
            )));
        }
        if let Some(h) = self.emitted().iter().position(|&o| o >= n_obs) {
            return Err(GecError::OutOfRange(format!("observation at step {h}")));
        }
        if self.observations[horizon] != n_obs {
            return Err(GecError::OutOfRange("terminal observation is not the dummy index".into()));
        }
        if let Some(h) = self.actions.iter().position(|&a| a >= n_actions) {
            return Err(GecError::OutOfRange(format!("action at step {h}")));
        }
        if self.rewards.iter().any(|r| *r < 0.0) || self.total_reward() > 1.0 + 1e-9 {
            return Err(GecError::InvalidModel("rewards outside the episode budget".into()));
        }
        Ok(())
    }
}
