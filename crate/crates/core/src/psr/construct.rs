use super::decoder::{verify_decoder, window};
use super::{CoreTest, CoreTestSet, Decoder, OperatorPsr};
use crate::decision::{ObservableModel, TabularMdp, TabularPomdp};
use crate::error::{GecError, Result};
use crate::linalg::{pinv, singular_values, RANK_TOL};
use nalgebra::{DMatrix, DVector};

/// Node cap for the exhaustive decoder check.
const DECODER_NODE_CAP: usize = 2_000_000;

/// `[P(t | s_k = s)]` for the listed tests at `step`; the dummy test has probability 1.
pub fn test_emission_matrix(pomdp: &TabularPomdp, step: usize, tests: &[CoreTest]) -> DMatrix<f64> {
    DMatrix::from_fn(tests.len(), pomdp.states, |i, s| {
        let t = &tests[i];
        if t.is_dummy() {
            1.0
        } else {
            pomdp.test_probability_from_state(step, s, &t.observations, &t.actions)
        }
    })
}

/// Shift operator: maps the entry of `(o, a, t')` at step `k` to the entry of `t'` at `k+1`.
fn selector(core: &CoreTestSet, k: usize, o: usize, a: usize) -> DMatrix<f64> {
    let now = &core.steps[k];
    let next = &core.steps[k + 1];
    DMatrix::from_fn(next.len(), now.len(), |r, c| {
        let (t, t2) = (&now[c], &next[r]);
        let head = t.observations[0] == o && t.actions.first().is_none_or(|&b| b == a);
        let tail = t.observations[1..] == t2.observations[..] && t.actions.get(1..).unwrap_or(&[]) == &t2.actions[..];
        if head && tail {
            1.0
        } else {
            0.0
        }
    })
}

fn transition_columns(pomdp: &TabularPomdp, k: usize, a: usize) -> DMatrix<f64> {
    let t = &pomdp.transitions[k][a];
    DMatrix::from_fn(pomdp.states, pomdp.states, |s2, s| t[s][s2])
}

/// Operators of an `m`-step weakly revealing POMDP:
/// `M_k(o,a) = E_{k+1} T_{k,a} diag(O_k(o|.)) E_k^+` while the tests at `k+1` are full
/// length, shift selectors afterwards.
pub fn psr_from_weakly_revealing_pomdp(pomdp: &TabularPomdp, m: usize) -> Result<OperatorPsr> {
    pomdp.validate()?;
    if m == 0 {
        return Err(GecError::Config("m must be at least 1".into()));
    }
    let (h_, s_, o_, a_) = (pomdp.horizon, pomdp.states, pomdp.observations, pomdp.actions);
    let core = CoreTestSet::m_step(h_, o_, a_, m);
    let emission: Vec<DMatrix<f64>> = (0..=h_).map(|k| test_emission_matrix(pomdp, k, &core.steps[k])).collect();
    let q0 = &emission[0] * DVector::from_column_slice(&pomdp.initial);
    let mut operators = Vec::with_capacity(h_);
    for k in 0..h_ {
        let full = k + m < h_;
        let pinv_k = if full {
            let sv = singular_values(&emission[k]);
            let sigma = sv.get(s_ - 1).copied().unwrap_or(0.0);
            if sv.len() < s_ || sigma <= RANK_TOL * sv[0] {
                return Err(GecError::NotWeaklyRevealing { m, step: k, sigma });
            }
            Some(pinv(&emission[k], RANK_TOL))
        } else {
            None
        };
        let per_o = (0..o_)
            .map(|o| {
                (0..a_)
                    .map(|a| match &pinv_k {
                        Some(p) => {
                            let diag = DMatrix::from_diagonal(&DVector::from_fn(s_, |s, _| pomdp.emissions[k][s][o]));
                            &emission[k + 1] * transition_columns(pomdp, k, a) * diag * p
                        }
                        None => selector(&core, k, o, a),
                    })
                    .collect()
            })
            .collect();
        operators.push(per_o);
    }
    OperatorPsr::new(core, o_, a_, q0, operators, pomdp.rewards.clone())
}

/// Operators of an `m`-step decodable POMDP, built from the one-step law
/// `P(o_{k+m} | s_{k+m-1} = phi(t), a_{k+m-1})` of the decoded state.
pub fn psr_from_decodable_pomdp(pomdp: &TabularPomdp, decoder: &Decoder) -> Result<OperatorPsr> {
    pomdp.validate()?;
    let m = decoder.m;
    if m == 0 {
        return Err(GecError::Config("m must be at least 1".into()));
    }
    verify_decoder(pomdp, decoder, DECODER_NODE_CAP)?;
    let (h_, o_, a_) = (pomdp.horizon, pomdp.observations, pomdp.actions);
    let core = CoreTestSet::m_step(h_, o_, a_, m);
    let q0 = DVector::from_iterator(
        core.len_at(0),
        core.steps[0].iter().map(|t| pomdp.dynamics_probability(&t.observations, &t.actions)),
    );
    let mut operators = Vec::with_capacity(h_);
    for k in 0..h_ {
        let full = k + m < h_;
        let mut per_o = Vec::with_capacity(o_);
        for o in 0..o_ {
            let mut per_a = Vec::with_capacity(a_);
            for a in 0..a_ {
                if !full {
                    per_a.push(selector(&core, k, o, a));
                    continue;
                }
                let now = &core.steps[k];
                let next = &core.steps[k + 1];
                let decoded: Vec<Option<usize>> = now
                    .iter()
                    .map(|t| {
                        let w = window(m, m - 1, &t.observations, &t.actions);
                        decoder.decode(k + m - 1, &w)
                    })
                    .collect();
                per_a.push(DMatrix::from_fn(next.len(), now.len(), |r, c| {
                    let (t, t2) = (&now[c], &next[r]);
                    let head = t.observations[0] == o && (m == 1 || t.actions[0] == a);
                    let overlap = t.observations[1..] == t2.observations[..m - 1]
                        && t.actions.get(1..).unwrap_or(&[]) == &t2.actions[..m.saturating_sub(2).min(t2.actions.len())];
                    let Some(s) = decoded[c] else { return 0.0 };
                    if !(head && overlap) {
                        return 0.0;
                    }
                    let last_a = if m == 1 { a } else { t2.actions[m - 2] };
                    let o_next = t2.observations[m - 1];
                    pomdp.transitions[k + m - 1][last_a][s]
                        .iter()
                        .enumerate()
                        .map(|(s2, p)| p * pomdp.emissions[k + m][s2][o_next])
                        .sum()
                }));
            }
            per_o.push(per_a);
        }
        operators.push(per_o);
    }
    OperatorPsr::new(core, o_, a_, q0, operators, pomdp.rewards.clone())
}

/// The POMDP over `(s, component)` whose observation reveals `s`; the component is
/// drawn once from `weights`. Augmented state index is `component * S + s`.
pub fn latent_mdp_to_pomdp(components: &[TabularMdp], weights: &[f64]) -> Result<TabularPomdp> {
    let Some(first) = components.first() else {
        return Err(GecError::Config("latent MDP needs at least one component".into()));
    };
    if weights.len() != components.len() {
        return Err(GecError::InvalidModel(format!(
            "{} weights for {} components",
            weights.len(),
            components.len()
        )));
    }
    crate::decision::check_distribution(weights, "mixing weights")?;
    let (h_, s_, a_) = (first.horizon, first.states, first.actions);
    for (i, c) in components.iter().enumerate() {
        c.validate()?;
        if (c.horizon, c.states, c.actions) != (h_, s_, a_) {
            return Err(GecError::InvalidModel(format!("component {i} has a different shape")));
        }
        let same_rewards = c
            .rewards
            .iter()
            .flatten()
            .flatten()
            .zip(first.rewards.iter().flatten().flatten())
            .all(|(x, y)| (x - y).abs() <= 1e-12);
        if !same_rewards {
            return Err(GecError::InvalidModel(format!("component {i} has different rewards")));
        }
    }
    let n = components.len() * s_;
    let initial = (0..n).map(|i| weights[i / s_] * components[i / s_].initial[i % s_]).collect();
    let transitions = (0..h_ - 1)
        .map(|k| {
            (0..a_)
                .map(|a| {
                    (0..n)
                        .map(|i| {
                            let (c, s) = (i / s_, i % s_);
                            let mut row = vec![0.0; n];
                            row[c * s_..(c + 1) * s_].copy_from_slice(&components[c].transitions[k][s][a]);
                            row
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let emissions = vec![
        (0..n)
            .map(|i| (0..s_).map(|o| if o == i % s_ { 1.0 } else { 0.0 }).collect())
            .collect();
        h_
    ];
    let p = TabularPomdp {
        horizon: h_,
        states: n,
        observations: s_,
        actions: a_,
        initial,
        transitions,
        emissions,
        rewards: first.rewards.clone(),
    };
    p.validate()?;
    Ok(p)
}
