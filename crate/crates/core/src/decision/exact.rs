//! Exact computations over the trajectory tree and seeded sampling.

use super::{HistoryPolicy, ObservableModel, Trajectory};
use crate::error::{GecError, Result};
use crate::rng::SeededSampler;
use rand::RngCore;

fn check_horizon(model: &(impl ObservableModel + ?Sized), policy: &HistoryPolicy) -> Result<()> {
    if policy.horizon() != model.horizon() {
        return Err(GecError::Config(format!(
            "policy horizon {} does not match model horizon {}",
            policy.horizon(),
            model.horizon()
        )));
    }
    Ok(())
}

/// Draw one episode from `P^pi`.
pub fn sample_episode(
    model: &(impl ObservableModel + ?Sized),
    policy: &HistoryPolicy,
    rng: &mut dyn RngCore,
) -> Result<Trajectory> {
    check_horizon(model, policy)?;
    model.sample_with(policy, rng)
}

/// Draw episode number `episode` of the sampler's stream.
pub fn sample_episode_seeded(
    model: &(impl ObservableModel + ?Sized),
    policy: &HistoryPolicy,
    sampler: &SeededSampler,
    episode: u64,
) -> Result<Trajectory> {
    let mut rng = sampler.episode_rng(episode);
    sample_episode(model, policy, &mut rng)
}

/// `P(tau_H) * pi(tau_H)`: dynamics factor times policy factor.
pub fn trajectory_probability(
    model: &(impl ObservableModel + ?Sized),
    policy: &HistoryPolicy,
    tau: &Trajectory,
) -> Result<f64> {
    check_horizon(model, policy)?;
    let horizon = model.horizon();
    tau.validate(horizon, model.num_obs(), model.num_actions())?;
    let pi = policy.sequence_probability(&tau.observations, &tau.actions, horizon);
    if pi == 0.0 {
        return Ok(0.0);
    }
    let p = model.dynamics_probability(tau.emitted(), &tau.actions);
    Ok((p * pi).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTrajectory {
    pub trajectory: Trajectory,
    pub probability: f64,
}

/// Every trajectory with positive probability under `policy`, with its probability.
pub fn enumerate_trajectories(
    model: &(impl ObservableModel + ?Sized),
    policy: &HistoryPolicy,
    cap: usize,
) -> Result<Vec<WeightedTrajectory>> {
    check_horizon(model, policy)?;
    let mut out = Vec::new();
    let mut obs = Vec::new();
    let mut acts = Vec::new();
    let mut rewards = Vec::new();
    enumerate_rec(model, policy, 0, model.initial_filter(), 1.0, &mut obs, &mut acts, &mut rewards, &mut out, cap)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_rec(
    model: &(impl ObservableModel + ?Sized),
    policy: &HistoryPolicy,
    step: usize,
    filter: Vec<f64>,
    prob: f64,
    obs: &mut Vec<usize>,
    acts: &mut Vec<usize>,
    rewards: &mut Vec<f64>,
    out: &mut Vec<WeightedTrajectory>,
    cap: usize,
) -> Result<()> {
    let horizon = model.horizon();
    if step == horizon {
        if out.len() >= cap {
            return Err(GecError::TooLarge(format!("more than {cap} trajectories")));
        }
        let mut o = obs.clone();
        o.push(model.num_obs());
        out.push(WeightedTrajectory {
            trajectory: Trajectory {
                observations: o,
                actions: acts.clone(),
                rewards: rewards.clone(),
            },
            probability: prob,
        });
        return Ok(());
    }
    let dist = model.next_obs_dist(step, &filter, 0)?;
    for (o, &po) in dist.iter().enumerate() {
        if po <= 0.0 {
            continue;
        }
        obs.push(o);
        let pa = policy.action_probs(step, obs, acts);
        for (a, &p) in pa.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acts.push(a);
            rewards.push(model.reward(step, o, a));
            let next = if step + 1 < horizon {
                model.advance(step, &filter, o, a)?
            } else {
                Vec::new()
            };
            enumerate_rec(model, policy, step + 1, next, prob * po * p, obs, acts, rewards, out, cap)?;
            acts.pop();
            rewards.pop();
        }
        obs.pop();
    }
    Ok(())
}

/// Exact expected total reward `V^pi` by recursion over the trajectory tree.
pub fn evaluate_policy(model: &(impl ObservableModel + ?Sized), policy: &HistoryPolicy) -> Result<f64> {
    check_horizon(model, policy)?;
    let mut obs = Vec::new();
    let mut acts = Vec::new();
    value_rec(model, policy, 0, &model.initial_filter(), &mut obs, &mut acts)
}

fn value_rec(
    model: &(impl ObservableModel + ?Sized),
    policy: &HistoryPolicy,
    step: usize,
    filter: &[f64],
    obs: &mut Vec<usize>,
    acts: &mut Vec<usize>,
) -> Result<f64> {
    let horizon = model.horizon();
    let dist = model.next_obs_dist(step, filter, 0)?;
    let mut v = 0.0;
    for (o, &po) in dist.iter().enumerate() {
        if po <= 0.0 {
            continue;
        }
        obs.push(o);
        let pa = policy.action_probs(step, obs, acts);
        for (a, &p) in pa.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let mut q = model.reward(step, o, a);
            if step + 1 < horizon {
                let next = model.advance(step, filter, o, a)?;
                acts.push(a);
                q += value_rec(model, policy, step + 1, &next, obs, acts)?;
                acts.pop();
            }
            v += po * p * q;
        }
        obs.pop();
    }
    Ok(v)
}
