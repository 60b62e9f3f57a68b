use crate::decision::TabularMdp;
use crate::error::{GecError, Result};
use crate::hypothesis::ValueHypothesis;
use serde::{Deserialize, Serialize};

/// Default cap on the number of functions and of distinct measures.
pub const DIMENSION_CAP: usize = 10;

/// Union of disjoint half-open intervals `[a, b)`, sorted.
#[derive(Debug, Clone, PartialEq)]
struct IntervalSet(Vec<(f64, f64)>);

impl IntervalSet {
    fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn from_intervals(mut v: Vec<(f64, f64)>) -> Self {
        v.retain(|(a, b)| a < b);
        v.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
        for (a, b) in v {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        Self(out)
    }

    fn union(&self, other: &Self) -> Self {
        Self::from_intervals(self.0.iter().chain(&other.0).copied().collect())
    }

    fn intersect(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        for &(a, b) in &self.0 {
            for &(c, d) in &other.0 {
                let (lo, hi) = (a.max(c), b.min(d));
                if lo < hi {
                    out.push((lo, hi));
                }
            }
        }
        Self::from_intervals(out)
    }
}

/// Longest sequence of measures, each `eps'`-independent of its predecessors for a
/// single shared `eps' >= eps`.
///
/// `functions[g][x]` and `measures[m][x]` are tabulated over a common finite domain.
/// Independence of a measure from its predecessors depends only on the set of
/// predecessors, so the search runs over subsets; for every subset it keeps the exact set
/// of thresholds `eps'` admitting a valid ordering, as a union of intervals
/// `[sqrt(sum_k E_k[g]^2), |E[g]|)`.
pub fn de_dimension(functions: &[Vec<f64>], measures: &[Vec<f64>], eps: f64, cap: usize) -> Result<usize> {
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for m in measures {
        if !distinct.contains(&m) {
            distinct.push(m);
        }
    }
    if functions.len() > cap || distinct.len() > cap {
        return Err(GecError::TooLarge(format!(
            "{} functions and {} measures exceed the cap {cap}",
            functions.len(),
            distinct.len()
        )));
    }
    if !(eps >= 0.0) {
        return Err(GecError::Config("eps must be non-negative".into()));
    }
    let n = distinct.len();
    if n == 0 || functions.is_empty() {
        return Ok(0);
    }
    let domain = distinct[0].len();
    if distinct.iter().any(|m| m.len() != domain) || functions.iter().any(|g| g.len() != domain) {
        return Err(GecError::Config("functions and measures must share one domain".into()));
    }
    // e[m][g] = E_{rho_m}[g]
    let e: Vec<Vec<f64>> = distinct
        .iter()
        .map(|m| functions.iter().map(|g| m.iter().zip(g).map(|(p, v)| p * v).sum()).collect())
        .collect();
    let full = 1usize << n;
    let mut sq = vec![vec![0.0; functions.len()]; full];
    for set in 1..full {
        let low = set.trailing_zeros() as usize;
        let rest = set & (set - 1);
        for g in 0..functions.len() {
            sq[set][g] = sq[rest][g] + e[low][g] * e[low][g];
        }
    }
    let mut feasible: Vec<IntervalSet> = vec![IntervalSet(Vec::new()); full];
    feasible[0] = IntervalSet(vec![(eps, f64::INFINITY)]);
    let mut best = 0;
    for set in 1..full {
        let mut acc = IntervalSet(Vec::new());
        for last in 0..n {
            if set & (1 << last) == 0 {
                continue;
            }
            let prev = set & !(1 << last);
            if feasible[prev].is_empty() {
                continue;
            }
            let window = IntervalSet::from_intervals(
                (0..functions.len()).map(|g| (sq[prev][g].sqrt(), e[last][g].abs())).collect(),
            );
            acc = acc.union(&feasible[prev].intersect(&window));
        }
        if !acc.is_empty() {
            best = best.max(set.count_ones() as usize);
        }
        feasible[set] = acc;
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeType {
    /// Residuals over `(x, a)`, roll-in laws over `(x_h, a_h)`.
    Q,
    /// Residuals over `x` at the greedy action, roll-in laws over `x_h`.
    V,
}

fn bellman_residual(mdp: &TabularMdp, f: &ValueHypothesis, h: usize, x: usize, a: usize) -> f64 {
    let next: f64 = if h + 1 < mdp.horizon {
        mdp.transitions[h][x][a].iter().enumerate().map(|(y, p)| p * f.v(h + 1, y)).sum()
    } else {
        0.0
    };
    f.q[h][x][a] - mdp.rewards[h][x][a] - next
}

/// State laws `d_h(x)` of the greedy policy of `f`.
fn state_laws(mdp: &TabularMdp, f: &ValueHypothesis) -> Vec<Vec<f64>> {
    let mut laws = vec![mdp.initial.clone()];
    for h in 0..mdp.horizon - 1 {
        let mut next = vec![0.0; mdp.states];
        for (x, &px) in laws[h].iter().enumerate() {
            let a = f.greedy(h, x);
            for (y, p) in mdp.transitions[h][x][a].iter().enumerate() {
                next[y] += px * p;
            }
        }
        laws.push(next);
    }
    laws
}

/// Bellman eluder dimension of a value class on a tabular MDP: the DE dimension of the
/// step-`h` Bellman residuals against the roll-in laws of the class's greedy policies,
/// maximized over `h`.
pub fn be_dimension(mdp: &TabularMdp, class: &[ValueHypothesis], eps: f64, kind: BeType, cap: usize) -> Result<usize> {
    if class.len() > cap {
        return Err(GecError::TooLarge(format!("{} hypotheses exceed the cap {cap}", class.len())));
    }
    let (s_, a_) = (mdp.states, mdp.actions);
    let laws: Vec<Vec<Vec<f64>>> = class.iter().map(|f| state_laws(mdp, f)).collect();
    let mut best = 0;
    for h in 0..mdp.horizon {
        let (functions, measures): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match kind {
            BeType::Q => (
                class
                    .iter()
                    .map(|f| (0..s_ * a_).map(|k| bellman_residual(mdp, f, h, k / a_, k % a_)).collect())
                    .collect(),
                class
                    .iter()
                    .zip(&laws)
                    .map(|(f, l)| {
                        let mut m = vec![0.0; s_ * a_];
                        for x in 0..s_ {
                            m[x * a_ + f.greedy(h, x)] += l[h][x];
                        }
                        m
                    })
                    .collect(),
            ),
            BeType::V => (
                class
                    .iter()
                    .map(|f| (0..s_).map(|x| bellman_residual(mdp, f, h, x, f.greedy(h, x))).collect())
                    .collect(),
                laws.iter().map(|l| l[h].clone()).collect(),
            ),
        };
        best = best.max(de_dimension(&functions, &measures, eps, cap)?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_function_has_no_independent_measure() {
        let g = vec![vec![0.0, 0.0]];
        let m = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(de_dimension(&g, &m, 0.1, 10).unwrap(), 0);
    }

    #[test]
    fn orthogonal_point_masses() {
        let g = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(de_dimension(&g, &m, 0.5, 10).unwrap(), 2);
        assert_eq!(de_dimension(&g, &m, 1.0, 10).unwrap(), 0);
    }

    #[test]
    fn repeated_measures_count_once() {
        let g = vec![vec![1.0, 0.0]];
        let m = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        assert_eq!(de_dimension(&g, &m, 0.5, 10).unwrap(), 1);
    }

    #[test]
    fn cap_is_enforced() {
        let g = vec![vec![1.0]; 11];
        assert!(matches!(de_dimension(&g, &[vec![1.0]], 0.1, 10), Err(GecError::TooLarge(_))));
    }

    #[test]
    fn intervals_merge() {
        let s = IntervalSet::from_intervals(vec![(0.0, 1.0), (0.5, 2.0), (3.0, 4.0), (5.0, 5.0)]);
        assert_eq!(s.0, vec![(0.0, 2.0), (3.0, 4.0)]);
        let t = s.intersect(&IntervalSet(vec![(1.5, 3.5)]));
        assert_eq!(t.0, vec![(1.5, 2.0), (3.0, 3.5)]);
    }
}
