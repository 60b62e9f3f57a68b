//! Theory-prescribed tuning and GEC upper bounds.

use serde::{Deserialize, Serialize};

/// Burn-in accuracy `eps = 1 / sqrt(H^2 T)`.
pub fn default_epsilon(horizon: usize, episodes: usize) -> f64 {
    1.0 / ((horizon * horizon * episodes) as f64).sqrt()
}

/// Q-type Bellman eluder bound `2 d_Q H log T`.
pub fn eluder_gec_bound(d_q: f64, horizon: usize, episodes: usize) -> f64 {
    2.0 * d_q * horizon as f64 * (episodes as f64).ln()
}

/// Q-type witness-rank bound `4 d_Q H log(1 + T / (eps kappa^2)) / kappa^2`.
pub fn witness_gec_bound(d_q: f64, horizon: usize, episodes: usize, eps: f64, kappa: f64) -> f64 {
    let k2 = kappa * kappa;
    4.0 * d_q * horizon as f64 * (1.0 + episodes as f64 / (eps * k2)).ln() / k2
}

/// Inputs of the generalized-regular PSR bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsrBoundInputs {
    pub d_psr: f64,
    pub n_actions: usize,
    pub u_a: usize,
    pub horizon: usize,
    pub alpha: f64,
    pub delta: f64,
    pub episodes: usize,
}

/// `d_PSR A^3 U_A^4 H iota / alpha^4` with
/// `iota = 2 log(1 + 4 d_PSR A^2 U_A^2 delta^2 T / alpha^4)` (leading constant 1).
pub fn psr_gec_bound(p: &PsrBoundInputs) -> f64 {
    let a = p.n_actions as f64;
    let u = p.u_a as f64;
    let a4 = p.alpha.powi(4);
    let iota = 2.0 * (1.0 + 4.0 * p.d_psr * a * a * u * u * p.delta * p.delta * p.episodes as f64 / a4).ln();
    p.d_psr * a.powi(3) * u.powi(4) * p.horizon as f64 * iota / a4
}

/// `gamma = 2 sqrt(log|H| T / d_GEC)`, used with `eta = 1/2` by the model-based and PSR agents.
pub fn prescribed_gamma(class_size: usize, episodes: usize, d_gec: f64) -> f64 {
    2.0 * ((class_size as f64).ln() * episodes as f64 / d_gec).sqrt()
}

pub const PRESCRIBED_ETA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoBilinearSchedule {
    pub n_batch: usize,
    pub iterations: usize,
    pub gamma: f64,
    pub eta: f64,
}

impl PoBilinearSchedule {
    pub fn episodes(&self, horizon: usize) -> usize {
        self.n_batch * self.iterations * horizon
    }
}

/// `N_batch = (A^2 iota / (d H))^{1/3} K^{2/3}`, `T = K / (N_batch H)`,
/// `gamma = eta = K^{1/3} log(|G||Pi|)`, `iota = log(|G||Pi| H K^2)`; integers rounded, at least 1.
pub fn pobilinear_schedule(total_episodes: usize, n_actions: usize, horizon: usize, d_gec: f64, class_size: usize) -> PoBilinearSchedule {
    let k = total_episodes as f64;
    let (a, h) = (n_actions as f64, horizon as f64);
    let log_class = (class_size as f64).ln();
    let iota = (class_size as f64 * h * k * k).ln();
    let n_batch = ((a * a * iota / (d_gec * h)).cbrt() * k.powf(2.0 / 3.0)).round().max(1.0) as usize;
    let iterations = (k / (n_batch as f64 * h)).round().max(1.0) as usize;
    let scale = k.cbrt() * log_class;
    PoBilinearSchedule {
        n_batch,
        iterations,
        gamma: scale,
        eta: scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_are_positive_and_grow() {
        assert!(eluder_gec_bound(6.0, 3, 2000) > eluder_gec_bound(6.0, 3, 200));
        let e = default_epsilon(3, 2000);
        assert!((e - 1.0 / (3.0 * 2000f64.sqrt())).abs() < 1e-15);
        assert!(witness_gec_bound(6.0, 3, 2000, e, 1.0) > eluder_gec_bound(6.0, 3, 2000));
        let p = PsrBoundInputs {
            d_psr: 3.0,
            n_actions: 2,
            u_a: 1,
            horizon: 3,
            alpha: 1.0,
            delta: 1.0,
            episodes: 1000,
        };
        let b = psr_gec_bound(&p);
        assert!((b - 72.0 * 2.0 * (1.0 + 48_000f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn schedule_uses_the_budget() {
        let s = pobilinear_schedule(5000, 2, 2, 2.0, 64);
        let used = s.episodes(2) as f64;
        assert!((used - 5000.0).abs() <= s.n_batch as f64 * 2.0);
        assert!((s.gamma - 5000f64.cbrt() * 64f64.ln()).abs() < 1e-12);
    }
}
