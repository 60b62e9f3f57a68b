use super::{sample_index, HistoryPolicy, Trajectory};
use crate::error::{GecError, Result};
use rand::RngCore;

/// Common interface of every sequential model: tabular MDPs, POMDPs and operator PSRs.
///
/// A *filter* is the model's sufficient statistic for predicting the next observation:
/// a state distribution for MDPs, a belief for POMDPs and a normalized predictive vector
/// for PSRs. Steps are 0-based throughout.
pub trait ObservableModel: Send + Sync {
    fn horizon(&self) -> usize;
    fn num_obs(&self) -> usize;
    fn num_actions(&self) -> usize;

    /// Known deterministic reward `R_h(o, a)`.
    fn reward(&self, step: usize, obs: usize, action: usize) -> f64;

    /// `P(o_1..o_k | do(a_1..a_{k-1}))` for `k = obs.len()`; `actions` may be longer.
    fn dynamics_probability(&self, obs: &[usize], actions: &[usize]) -> f64;

    fn initial_filter(&self) -> Vec<f64>;

    /// Law of the observation at `step` given the filter. `action` is the action that
    /// will follow; valid models ignore it (it only matters for PSR completions).
    fn next_obs_dist(&self, step: usize, filter: &[f64], action: usize) -> Result<Vec<f64>>;

    /// Condition the filter on `obs` at `step` and push it through `action`.
    fn advance(&self, step: usize, filter: &[f64], obs: usize, action: usize) -> Result<Vec<f64>>;

    /// Draw one episode. The default runs the filter; latent-state models override it.
    fn sample_with(&self, policy: &HistoryPolicy, rng: &mut dyn RngCore) -> Result<Trajectory> {
        let horizon = self.horizon();
        let mut filter = self.initial_filter();
        let mut obs = Vec::with_capacity(horizon + 1);
        let mut acts = Vec::with_capacity(horizon);
        let mut rewards = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let dist = self.next_obs_dist(h, &filter, 0)?;
            let o = sample_index(&dist, rng);
            obs.push(o);
            let a = sample_index(&policy.action_probs(h, &obs, &acts), rng);
            acts.push(a);
            rewards.push(self.reward(h, o, a));
            if h + 1 < horizon {
                filter = self.advance(h, &filter, o, a)?;
            }
        }
        obs.push(self.num_obs());
        Ok(Trajectory {
            observations: obs,
            actions: acts,
            rewards,
        })
    }
}

pub(crate) fn normalize_filter(v: Vec<f64>) -> Result<Vec<f64>> {
    let s: f64 = v.iter().sum();
    if !(s > 1e-300) {
        return Err(GecError::UnreachableHistory);
    }
    Ok(v.into_iter().map(|x| x / s).collect())
}
