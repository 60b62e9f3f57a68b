//! Environments, trajectories, policies and seeded episode sampling.

mod env;
mod exact;
mod mdp;
mod model;
mod policy;
mod pomdp;
mod trajectory;

pub use env::Environment;
pub use exact::{
    enumerate_trajectories, evaluate_policy, sample_episode, sample_episode_seeded,
    trajectory_probability, WeightedTrajectory,
};
pub use mdp::TabularMdp;
pub use model::ObservableModel;
pub use policy::{compose_exploration, memory_code, memory_table_len, ExplorationKind, HistoryPolicy};
pub use pomdp::TabularPomdp;
pub use trajectory::Trajectory;

use crate::error::{GecError, Result};
use rand::Rng;

/// Tolerance for row sums of stochastic vectors.
pub const STOCHASTIC_TOL: f64 = 1e-12;

pub(crate) fn check_distribution(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(GecError::InvalidModel(format!("{what}: empty distribution")));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite() || *x < 0.0) {
        return Err(GecError::InvalidModel(format!(
            "{what}: entry {i} is {} (must be a non-negative number)",
            v[i]
        )));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL * v.len().max(1) as f64 {
        return Err(GecError::InvalidModel(format!("{what}: sums to {s}, expected 1")));
    }
    Ok(())
}

pub(crate) fn check_reward_budget(per_step_max: impl Iterator<Item = f64>) -> Result<()> {
    let total: f64 = per_step_max.sum();
    if total > 1.0 + 1e-12 {
        return Err(GecError::InvalidModel(format!(
            "reward budget violated: sum over steps of max reward is {total} > 1"
        )));
    }
    Ok(())
}

pub(crate) fn check_rewards(r: &[f64], what: &str) -> Result<()> {
    if let Some(i) = r.iter().position(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
        return Err(GecError::InvalidModel(format!(
            "{what}: reward {i} is {} (must lie in [0,1])",
            r[i]
        )));
    }
    Ok(())
}

/// Draw an index from a probability vector. Mass lost to rounding goes to the last
/// positive entry.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// A Dirichlet(1) draw, i.e. a uniform point on the simplex.
pub fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

pub(crate) fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn distribution_checks() {
        assert!(check_distribution(&[0.1, 0.2, 0.7], "x").is_ok());
        let err = check_distribution(&[0.5, 0.49], "row 3").unwrap_err();
        assert!(err.to_string().contains("row 3"));
        assert!(check_distribution(&[1.5, -0.5], "x").is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_lowest(&[0.0, 1.0, 1.0]), 1);
        assert_eq!(argmax_lowest(&[0.0, 0.0]), 0);
    }

    #[test]
    fn sample_index_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = [0.2, 0.0, 0.8];
        let mut counts = [0usize; 3];
        for _ in 0..20000 {
            counts[sample_index(&p, &mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        let f = counts[0] as f64 / 20000.0;
        assert!((f - 0.2).abs() < 0.02);
    }
}
