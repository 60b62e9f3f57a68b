use crate::decision::sample_index;
use crate::error::{GecError, Result};
use rand::Rng;

/// `log sum exp` that ignores `-inf` entries; `-inf` for an all-`-inf` input.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalized probabilities from log-weights. All `-inf` yields the uniform law.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(v);
    if z == f64::NEG_INFINITY {
        return vec![1.0 / v.len() as f64; v.len()];
    }
    let mut p: Vec<f64> = v.iter().map(|&x| (x - z).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

fn ln_prior(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Exponential-weights posterior over a finite class, stored as log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPosterior {
    pub log_weights: Vec<f64>,
    pub gamma: f64,
    pub eta: f64,
}

impl JointPosterior {
    /// `log p0(f) + gamma V_f + eta * score(f)`.
    pub fn new(prior: &[f64], values: &[f64], gamma: f64, eta: f64, scores: &[f64]) -> Self {
        let log_weights = prior
            .iter()
            .zip(values)
            .zip(scores)
            .map(|((&p, &v), &s)| {
                let lp = ln_prior(p);
                if lp == f64::NEG_INFINITY || s == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                let tilt = if gamma == 0.0 { 0.0 } else { gamma * v };
                let fit = if eta == 0.0 { 0.0 } else { eta * s };
                lp + tilt + fit
            })
            .collect();
        Self { log_weights, gamma, eta }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        softmax(&self.log_weights)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.probabilities(), rng)
    }

    /// Indices whose weight is exactly zero.
    pub fn eliminated(&self) -> Vec<usize> {
        self.log_weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w == f64::NEG_INFINITY)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn normalization_error(&self) -> f64 {
        (self.probabilities().iter().sum::<f64>() - 1.0).abs()
    }
}

/// Layer-factored posterior over tuples `(f_0, ..., f_{H-1})`:
///
/// `p(f) ∝ exp(gamma V(f_0)) * prod_{h<H-1} psi_h(f_h, f_{h+1}) * phi(f_{H-1})`
///
/// with `log psi_h(i, j) = log p0_h(i) - eta L_h(i, j) - log Z_h(j)`,
/// `log Z_h(j) = log sum_i p0_h(i) exp(-eta L_h(i, j))` and
/// `log phi(i) = log p0_{H-1}(i) - eta L_{H-1}(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPosterior {
    /// `gamma V(i)` for the first layer.
    pub log_first: Vec<f64>,
    /// `log psi_h[i][j]` for `h < H-1`.
    pub log_pair: Vec<Vec<Vec<f64>>>,
    pub log_last: Vec<f64>,
    /// Backward messages `beta_h(i)`.
    beta: Vec<Vec<f64>>,
    log_z: f64,
}

impl ChainPosterior {
    /// `pair_losses[h][i][j]` for `h < H-1` and `last_losses[i]` for the final layer.
    pub fn new(
        priors: &[Vec<f64>],
        first_values: &[f64],
        pair_losses: &[Vec<Vec<f64>>],
        last_losses: &[f64],
        gamma: f64,
        eta: f64,
    ) -> Result<Self> {
        let horizon = priors.len();
        if horizon == 0 || pair_losses.len() + 1 != horizon {
            return Err(GecError::Config(format!(
                "{} pair-loss layers for {horizon} prior layers",
                pair_losses.len()
            )));
        }
        if first_values.len() != priors[0].len() || last_losses.len() != priors[horizon - 1].len() {
            return Err(GecError::Config("layer sizes of values or losses do not match priors".into()));
        }
        let scale = |eta: f64, l: f64| if eta == 0.0 { 0.0 } else { eta * l };
        let log_first: Vec<f64> = first_values.iter().map(|&v| if gamma == 0.0 { 0.0 } else { gamma * v }).collect();
        let mut log_pair: Vec<Vec<Vec<f64>>> = Vec::with_capacity(horizon - 1);
        for (h, l) in pair_losses.iter().enumerate() {
            let (m, n) = (priors[h].len(), priors[h + 1].len());
            if l.len() != m || l.iter().any(|r| r.len() != n) {
                return Err(GecError::Config(format!("pair losses at step {h} must be {m}x{n}")));
            }
            let raw: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|j| ln_prior(priors[h][i]) - scale(eta, l[i][j])).collect()).collect();
            let log_zs: Vec<f64> = (0..n).map(|j| log_sum_exp(&raw.iter().map(|r| r[j]).collect::<Vec<_>>())).collect();
            log_pair.push(raw.iter().map(|r| r.iter().zip(&log_zs).map(|(x, z)| x - z).collect()).collect());
        }
        let log_last: Vec<f64> = priors[horizon - 1].iter().zip(last_losses).map(|(&p, &l)| ln_prior(p) - scale(eta, l)).collect();

        let mut beta = vec![Vec::new(); horizon];
        beta[horizon - 1] = log_last.clone();
        for h in (0..horizon - 1).rev() {
            beta[h] = log_pair[h]
                .iter()
                .map(|row| log_sum_exp(&row.iter().zip(&beta[h + 1]).map(|(a, b)| a + b).collect::<Vec<_>>()))
                .collect();
        }
        let root: Vec<f64> = log_first.iter().zip(&beta[0]).map(|(a, b)| a + b).collect();
        let log_z = log_sum_exp(&root);
        Ok(Self { log_first, log_pair, log_last, beta, log_z })
    }

    pub fn horizon(&self) -> usize {
        self.log_pair.len() + 1
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.beta.iter().map(|b| b.len()).collect()
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_z
    }

    /// Unnormalized log-weight of a tuple.
    pub fn log_joint(&self, index: &[usize]) -> f64 {
        let mut l = self.log_first[index[0]];
        for (h, w) in index.windows(2).enumerate() {
            l += self.log_pair[h][w[0]][w[1]];
        }
        l + self.log_last[index[self.horizon() - 1]]
    }

    pub fn probability(&self, index: &[usize]) -> f64 {
        if self.log_z == f64::NEG_INFINITY {
            return 0.0;
        }
        (self.log_joint(index) - self.log_z).exp()
    }

    /// Forward filtering, backward sampling (here: backward messages, forward draws).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let root: Vec<f64> = self.log_first.iter().zip(&self.beta[0]).map(|(a, b)| a + b).collect();
        let mut index = vec![sample_index(&softmax(&root), rng)];
        for h in 0..self.horizon() - 1 {
            let i = index[h];
            let cond: Vec<f64> = self.log_pair[h][i].iter().zip(&self.beta[h + 1]).map(|(a, b)| a + b).collect();
            index.push(sample_index(&softmax(&cond), rng));
        }
        index
    }

    /// Per-layer marginals by forward-backward.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let horizon = self.horizon();
        let mut alpha = vec![self.log_first.clone()];
        for h in 0..horizon - 1 {
            let n = self.beta[h + 1].len();
            let next = (0..n)
                .map(|j| log_sum_exp(&alpha[h].iter().zip(&self.log_pair[h]).map(|(a, row)| a + row[j]).collect::<Vec<_>>()))
                .collect();
            alpha.push(next);
        }
        alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x + y - self.log_z).exp()).collect())
            .collect()
    }

    /// Explicit joint law over all tuples (mixed radix, first layer most significant).
    pub fn joint_enumeration(&self, cap: usize) -> Result<Vec<(Vec<usize>, f64)>> {
        let sizes = self.layer_sizes();
        let total = sizes.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).unwrap_or(usize::MAX);
        if total > cap {
            return Err(GecError::TooLarge(format!("{total} tuples exceed the enumeration cap {cap}")));
        }
        let logs: Vec<(Vec<usize>, f64)> = (0..total)
            .map(|k| {
                let idx = tuple_of(k, &sizes);
                let l = self.log_joint(&idx);
                (idx, l)
            })
            .collect();
        let z = log_sum_exp(&logs.iter().map(|(_, l)| *l).collect::<Vec<_>>());
        Ok(logs.into_iter().map(|(i, l)| (i, (l - z).exp())).collect())
    }

    pub fn normalization_error(&self) -> f64 {
        let root: Vec<f64> = self.log_first.iter().zip(&self.beta[0]).map(|(a, b)| a + b).collect();
        let s: f64 = root.iter().map(|x| (x - self.log_z).exp()).sum();
        (s - 1.0).abs()
    }
}

/// Mixed-radix index of a tuple, first layer most significant.
pub fn tuple_index(index: &[usize], sizes: &[usize]) -> usize {
    index.iter().zip(sizes).fold(0, |acc, (&i, &n)| acc * n + i)
}

pub fn tuple_of(mut k: usize, sizes: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; sizes.len()];
    for h in (0..sizes.len()).rev() {
        idx[h] = k % sizes[h];
        k /= sizes[h];
    }
    idx
}

/// Either posterior form.
#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorState {
    Joint(JointPosterior),
    Chain(ChainPosterior),
}

impl PosteriorState {
    pub fn normalization_error(&self) -> f64 {
        match self {
            Self::Joint(j) => j.normalization_error(),
            Self::Chain(c) => c.normalization_error(),
        }
    }
}
