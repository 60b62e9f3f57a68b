use crate::decision::TabularPomdp;
use crate::error::{GecError, Result};
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

type DecodeFn = dyn Fn(usize, &[usize]) -> Option<usize> + Send + Sync;

/// Map from `(step, window)` to a latent state, where the window is the interleaved
/// sequence `o_{k-w+1}, a_{k-w+1}, ..., a_{k-1}, o_k` of the last `w = min(m, k+1)`
/// observations.
#[derive(Clone)]
pub struct Decoder {
    pub m: usize,
    f: Arc<DecodeFn>,
}

impl fmt::Debug for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Decoder").field("m", &self.m).finish_non_exhaustive()
    }
}

/// Interleaved window ending at `step`.
pub fn window(m: usize, step: usize, obs: &[usize], acts: &[usize]) -> Vec<usize> {
    let start = (step + 1).saturating_sub(m);
    let mut w = Vec::with_capacity(2 * (step - start) + 1);
    for k in start..step {
        w.push(obs[k]);
        w.push(acts[k]);
    }
    w.push(obs[step]);
    w
}

impl Decoder {
    pub fn from_fn(m: usize, f: impl Fn(usize, &[usize]) -> Option<usize> + Send + Sync + 'static) -> Self {
        Self { m, f: Arc::new(f) }
    }

    /// One-step decoder for block structure: `partition[k][o]` is the state emitting `o` at step `k`.
    pub fn block(partition: Vec<Vec<usize>>) -> Self {
        Self::from_fn(1, move |k, w| partition.get(k).and_then(|p| p.get(w[0]).copied()))
    }

    pub fn decode(&self, step: usize, window: &[usize]) -> Option<usize> {
        (self.f)(step, window)
    }

    /// Decoder read off from every reachable latent path; fails if some window is
    /// emitted from two different states.
    pub fn infer(pomdp: &TabularPomdp, m: usize, node_cap: usize) -> Result<Self> {
        let mut table: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
        let mut conflict = None;
        visit_reachable(pomdp, m, node_cap, &mut |k, w, s| {
            match table.get(&(k, w.to_vec())) {
                Some(&prev) if prev != s => {
                    conflict.get_or_insert(GecError::DecoderInconsistent {
                        step: k,
                        window: w.to_vec(),
                        decoded: Some(prev),
                        actual: s,
                    });
                }
                Some(_) => {}
                None => {
                    table.insert((k, w.to_vec()), s);
                }
            }
        })?;
        if let Some(e) = conflict {
            return Err(e);
        }
        Ok(Self::from_fn(m, move |k, w| table.get(&(k, w.to_vec())).copied()))
    }
}

/// Check the decoder on every reachable latent path of the POMDP under every action sequence.
pub fn verify_decoder(pomdp: &TabularPomdp, decoder: &Decoder, node_cap: usize) -> Result<()> {
    let mut err = None;
    visit_reachable(pomdp, decoder.m, node_cap, &mut |k, w, s| {
        if err.is_none() {
            let d = decoder.decode(k, w);
            if d != Some(s) {
                err = Some(GecError::DecoderInconsistent {
                    step: k,
                    window: w.to_vec(),
                    decoded: d,
                    actual: s,
                });
            }
        }
    })?;
    err.map_or(Ok(()), Err)
}

fn visit_reachable(
    pomdp: &TabularPomdp,
    m: usize,
    node_cap: usize,
    f: &mut dyn FnMut(usize, &[usize], usize),
) -> Result<()> {
    let mut nodes = 0usize;
    let mut obs = Vec::new();
    let mut acts = Vec::new();
    for s in 0..pomdp.states {
        if pomdp.initial[s] > 0.0 {
            rec(pomdp, m, 0, s, &mut obs, &mut acts, &mut nodes, node_cap, f)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn rec(
    pomdp: &TabularPomdp,
    m: usize,
    k: usize,
    s: usize,
    obs: &mut Vec<usize>,
    acts: &mut Vec<usize>,
    nodes: &mut usize,
    cap: usize,
    f: &mut dyn FnMut(usize, &[usize], usize),
) -> Result<()> {
    *nodes += 1;
    if *nodes > cap {
        return Err(GecError::TooLarge(format!("more than {cap} latent-path nodes")));
    }
    for o in 0..pomdp.observations {
        if pomdp.emissions[k][s][o] <= 0.0 {
            continue;
        }
        obs.push(o);
        f(k, &window(m, k, obs, acts), s);
        if k + 1 < pomdp.horizon {
            for a in 0..pomdp.actions {
                acts.push(a);
                for s2 in 0..pomdp.states {
                    if pomdp.transitions[k][a][s][s2] > 0.0 {
                        rec(pomdp, m, k + 1, s2, obs, acts, nodes, cap, f)?;
                    }
                }
                acts.pop();
            }
        }
        obs.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_truncate_at_start() {
        assert_eq!(window(2, 0, &[3], &[]), vec![3]);
        assert_eq!(window(2, 2, &[1, 2, 3], &[0, 1]), vec![2, 1, 3]);
        assert_eq!(window(1, 2, &[1, 2, 3], &[0, 1]), vec![3]);
    }
}
