use super::posterior::{ChainPosterior, JointPosterior};
use crate::decision::{ObservableModel, Trajectory};
use crate::error::{GecError, Result};
use crate::hypothesis::{HypothesisClass, LayeredValueClass, Model, ModelHypothesis, PoBilinearHypothesis, ValueHypothesis};
use serde::{Deserialize, Serialize};

/// One transition `(x_h, a_h, r_h, x_{h+1})`; `x_next` is `None` at the last step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSample {
    pub episode: usize,
    pub step: usize,
    /// Index of the hypothesis whose exploration policy produced the sample.
    pub explorer: usize,
    pub x: usize,
    pub a: usize,
    pub r: f64,
    pub x_next: Option<usize>,
}

impl TransitionSample {
    pub fn from_trajectory(tau: &Trajectory, episode: usize, step: usize, explorer: usize) -> Self {
        Self {
            episode,
            step,
            explorer,
            x: tau.observations[step],
            a: tau.actions[step],
            r: tau.rewards[step],
            x_next: (step + 1 < tau.horizon()).then(|| tau.observations[step + 1]),
        }
    }
}

/// A full trajectory collected by the exploration policy for `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub episode: usize,
    pub step: usize,
    pub explorer: usize,
    pub trajectory: Trajectory,
}

/// `N_batch` trajectories collected by the exploration policy for `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSample {
    pub episode: usize,
    pub step: usize,
    pub explorer: usize,
    pub trajectories: Vec<Trajectory>,
}

/// Everything an agent has observed, in collection order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossLedger<S> {
    /// Number of entries appended per episode.
    pub steps_per_episode: usize,
    pub samples: Vec<S>,
}

impl<S> LossLedger<S> {
    pub fn new(steps_per_episode: usize) -> Self {
        Self {
            steps_per_episode,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, s: S) {
        self.samples.push(s);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn consistent_with(&self, episodes: usize) -> bool {
        self.samples.len() == episodes * self.steps_per_episode
    }
}

/// `Q_h(x_h, a_h) - r_h - V_{h+1}(x_{h+1})`.
pub fn bellman_error(f: &ValueHypothesis, z: &TransitionSample) -> f64 {
    let next = z.x_next.map_or(0.0, |x| f.v(z.step + 1, x));
    f.q[z.step][z.x][z.a] - z.r - next
}

/// `|A| pi(a | z) (r + g_next) - g` for precomputed pieces.
pub fn pobilinear_loss_parts(n_actions: usize, pi: f64, r: f64, g_next: f64, g: f64) -> f64 {
    n_actions as f64 * pi * (r + g_next) - g
}

/// The PO-bilinear loss of `f` on the step-`step` tuple of a trajectory.
pub fn pobilinear_loss(f: &PoBilinearHypothesis, tau: &Trajectory, step: usize) -> f64 {
    let (obs, acts) = (&tau.observations, &tau.actions);
    let pi = f.policy.action_prob(step, obs, acts, acts[step]);
    let g_next = if step + 1 < tau.horizon() {
        f.link.value(step + 1, obs, acts)
    } else {
        0.0
    };
    pobilinear_loss_parts(f.link.n_actions, pi, tau.rewards[step], g_next, f.link.value(step, obs, acts))
}

/// Batch mean of the PO-bilinear loss; errors when fewer than `n_batch` trajectories.
pub fn pobilinear_batch_mean(f: &PoBilinearHypothesis, batch: &[Trajectory], step: usize, n_batch: usize) -> Result<f64> {
    if batch.len() < n_batch || batch.is_empty() {
        return Err(GecError::ShortBatch {
            got: batch.len(),
            need: n_batch.max(1),
        });
    }
    let b = &batch[..n_batch.max(1)];
    Ok(b.iter().map(|t| pobilinear_loss(f, t, step)).sum::<f64>() / b.len() as f64)
}

fn ln_or_neg_inf(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Accumulated squared Bellman errors for a layered value class.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueLosses {
    /// `pair[h][i][j] = sum_s (Q_h^i(x,a) - r - V_{h+1}^j(x'))^2` for `h < H-1`.
    pub pair: Vec<Vec<Vec<f64>>>,
    /// `last[i] = sum_s (Q_{H-1}^i(x,a) - r)^2`.
    pub last: Vec<f64>,
}

impl ValueLosses {
    pub fn new(class: &LayeredValueClass) -> Self {
        let sizes = class.layer_sizes();
        let horizon = sizes.len();
        Self {
            pair: (0..horizon - 1).map(|h| vec![vec![0.0; sizes[h + 1]]; sizes[h]]).collect(),
            last: vec![0.0; sizes[horizon - 1]],
        }
    }

    pub fn add(&mut self, class: &LayeredValueClass, z: &TransitionSample) {
        let h = z.step;
        let layer = &class.layers[h];
        if h + 1 < class.horizon() {
            let x_next = z.x_next.expect("transition before the last step has a successor");
            let v_next: Vec<f64> = (0..class.layers[h + 1].len()).map(|j| class.v(h + 1, j, x_next)).collect();
            for (i, q) in layer.iter().enumerate() {
                let base = q[z.x][z.a] - z.r;
                for (j, v) in v_next.iter().enumerate() {
                    let e = base - v;
                    self.pair[h][i][j] += e * e;
                }
            }
        } else {
            for (i, q) in layer.iter().enumerate() {
                let e = q[z.x][z.a] - z.r;
                self.last[i] += e * e;
            }
        }
    }

    pub fn posterior(&self, class: &LayeredValueClass, gamma: f64, eta: f64) -> Result<ChainPosterior> {
        let first: Vec<f64> = (0..class.layers[0].len()).map(|i| class.value_of_first(i)).collect();
        ChainPosterior::new(&class.priors, &first, &self.pair, &self.last, gamma, eta)
    }
}

/// Conditional posterior over a layered value class from a transition ledger.
pub fn model_free_posterior_update(
    ledger: &LossLedger<TransitionSample>,
    class: &LayeredValueClass,
    gamma: f64,
    eta: f64,
) -> Result<ChainPosterior> {
    let mut losses = ValueLosses::new(class);
    for z in &ledger.samples {
        if z.step >= class.horizon() {
            return Err(GecError::OutOfRange(format!("ledger step {}", z.step)));
        }
        losses.add(class, z);
    }
    losses.posterior(class, gamma, eta)
}

/// `log P_{h,f}(x' | x, a)` for an MDP hypothesis.
pub fn transition_log_likelihood(model: &Model, z: &TransitionSample) -> Result<f64> {
    let Model::Mdp(m) = model else {
        return Err(GecError::Config("transition likelihoods need MDP hypotheses".into()));
    };
    Ok(match z.x_next {
        Some(x) => ln_or_neg_inf(m.transitions[z.step][z.x][z.a][x]),
        None => 0.0,
    })
}

fn model_values(class: &HypothesisClass<ModelHypothesis>) -> Vec<f64> {
    class.hypotheses.iter().map(|h| h.value).collect()
}

/// Log-likelihood posterior over MDP hypotheses from a transition ledger.
pub fn model_based_posterior_update(
    ledger: &LossLedger<TransitionSample>,
    class: &HypothesisClass<ModelHypothesis>,
    gamma: f64,
    eta: f64,
) -> Result<JointPosterior> {
    let mut scores = vec![0.0; class.len()];
    for z in &ledger.samples {
        for (s, h) in scores.iter_mut().zip(&class.hypotheses) {
            *s += transition_log_likelihood(&h.model, z)?;
        }
    }
    Ok(JointPosterior::new(&class.prior, &model_values(class), gamma, eta, &scores))
}

/// `log P_f(tau)`: the dynamics factor only.
pub fn trajectory_log_likelihood(model: &Model, tau: &Trajectory) -> f64 {
    ln_or_neg_inf(model.dynamics_probability(tau.emitted(), &tau.actions))
}

/// Trajectory-likelihood posterior over PSR/POMDP hypotheses.
pub fn psr_posterior_update(
    ledger: &LossLedger<TrajectorySample>,
    class: &HypothesisClass<ModelHypothesis>,
    gamma: f64,
    eta: f64,
) -> Result<JointPosterior> {
    let mut scores = vec![0.0; class.len()];
    for z in &ledger.samples {
        for (s, h) in scores.iter_mut().zip(&class.hypotheses) {
            *s += trajectory_log_likelihood(&h.model, &z.trajectory);
        }
    }
    Ok(JointPosterior::new(&class.prior, &model_values(class), gamma, eta, &scores))
}

/// Batched squared-loss posterior over a PO-bilinear class.
pub fn pobilinear_posterior_update(
    ledger: &LossLedger<BatchSample>,
    class: &HypothesisClass<PoBilinearHypothesis>,
    gamma: f64,
    eta: f64,
    n_batch: usize,
) -> Result<JointPosterior> {
    let mut scores = vec![0.0; class.len()];
    for b in &ledger.samples {
        for (s, h) in scores.iter_mut().zip(&class.hypotheses) {
            let m = pobilinear_batch_mean(h, &b.trajectories, b.step, n_batch)?;
            *s -= m * m;
        }
    }
    let values: Vec<f64> = class.hypotheses.iter().map(|h| h.value).collect();
    Ok(JointPosterior::new(&class.prior, &values, gamma, eta, &scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bellman_error_hand_case() {
        let f = ValueHypothesis {
            q: vec![vec![vec![0.5]], vec![vec![0.1]]],
        };
        let z = TransitionSample {
            episode: 0,
            step: 0,
            explorer: 0,
            x: 0,
            a: 0,
            r: 0.2,
            x_next: Some(0),
        };
        assert!((bellman_error(&f, &z) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn pobilinear_hand_case() {
        assert!((pobilinear_loss_parts(2, 0.5, 0.2, 0.1, 0.4) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn ledger_length_invariant() {
        let mut l = LossLedger::new(3);
        for k in 0..6 {
            l.push(k);
        }
        assert!(l.consistent_with(2));
        assert!(!l.consistent_with(3));
    }
}
