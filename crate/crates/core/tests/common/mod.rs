#![allow(dead_code)]

use geclab::decision::{TabularMdp, TabularPomdp, Trajectory};
use geclab::psr::Decoder;
use rand::Rng;

/// Every (observations, actions) pair of full length `h`.
pub fn all_histories(h: usize, n_obs: usize, n_actions: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = (n_obs * n_actions).pow(h as u32);
    (0..n)
        .map(|mut idx| {
            let mut obs = vec![0; h];
            let mut acts = vec![0; h];
            for k in (0..h).rev() {
                acts[k] = idx % n_actions;
                idx /= n_actions;
                obs[k] = idx % n_obs;
                idx /= n_obs;
            }
            (obs, acts)
        })
        .collect()
}

pub fn trajectory(obs: &[usize], acts: &[usize], n_obs: usize, reward: impl Fn(usize, usize, usize) -> f64) -> Trajectory {
    let mut o = obs.to_vec();
    o.push(n_obs);
    Trajectory {
        observations: o,
        actions: acts.to_vec(),
        rewards: (0..acts.len()).map(|k| reward(k, obs[k], acts[k])).collect(),
    }
}

/// Sum over latent paths of the joint probability of the observations.
pub fn latent_path_probability(p: &TabularPomdp, obs: &[usize], acts: &[usize]) -> f64 {
    let h = obs.len();
    let n = p.states.pow(h as u32);
    let mut total = 0.0;
    for mut idx in 0..n {
        let mut path = vec![0; h];
        for k in (0..h).rev() {
            path[k] = idx % p.states;
            idx /= p.states;
        }
        let mut w = p.initial[path[0]];
        for k in 0..h {
            w *= p.emissions[k][path[k]][obs[k]];
            if k + 1 < h {
                w *= p.transitions[k][acts[k]][path[k]][path[k + 1]];
            }
        }
        total += w;
    }
    total
}

/// Block POMDP: state `s` emits only observations `2s` and `2s+1`.
pub fn block_pomdp<R: Rng>(states: usize, actions: usize, horizon: usize, rng: &mut R) -> (TabularPomdp, Decoder) {
    let mut p = TabularPomdp::random(states, 2 * states, actions, horizon, rng);
    for layer in &mut p.emissions {
        for (s, row) in layer.iter_mut().enumerate() {
            let u: f64 = rng.random_range(0.05..0.95);
            row.iter_mut().for_each(|x| *x = 0.0);
            row[2 * s] = u;
            row[2 * s + 1] = 1.0 - u;
        }
    }
    let partition = vec![(0..2 * states).map(|o| o / 2).collect(); horizon];
    (p, Decoder::block(partition))
}

/// Random POMDP with one emission matrix shared by all steps and a heavy diagonal.
pub fn revealing_pomdp<R: Rng>(states: usize, actions: usize, horizon: usize, rng: &mut R) -> TabularPomdp {
    let mut p = TabularPomdp::random(states, states, actions, horizon, rng);
    let e: Vec<Vec<f64>> = (0..states)
        .map(|s| {
            let mut row: Vec<f64> = (0..states).map(|_| rng.random::<f64>() * 0.3).collect();
            row[s] += 1.0;
            let t: f64 = row.iter().sum();
            row.iter().map(|x| x / t).collect()
        })
        .collect();
    p.emissions = vec![e; horizon];
    p
}

pub fn identity_pomdp<R: Rng>(states: usize, actions: usize, horizon: usize, rng: &mut R) -> (TabularMdp, TabularPomdp) {
    let mdp = TabularMdp::random(states, actions, horizon, rng);
    let p = TabularPomdp::from_mdp(&mdp);
    (mdp, p)
}
