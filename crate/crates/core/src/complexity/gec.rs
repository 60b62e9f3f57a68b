use serde::{Deserialize, Serialize};

/// Discrepancy used for the training errors of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscrepancyKind {
    /// Squared Bellman residual at `(x_h, a_h)`.
    SquaredBellman,
    /// Squared Hellinger distance between next-state laws at `(x_h, a_h)`.
    TransitionHellinger,
    /// Squared Hellinger distance between full-trajectory laws.
    TrajectoryHellinger,
}

/// Prediction and training errors along one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GecTrace {
    pub horizon: usize,
    pub discrepancy: DiscrepancyKind,
    /// `V_{f^t} - V^{pi_{f^t}}` per episode.
    pub prediction_errors: Vec<f64>,
    /// `sum_h sum_{s<t} E_{pi_exp(f^s,h)} l(f^t, xi_h)` per episode.
    pub training_errors: Vec<f64>,
    /// Monte Carlo standard error of the training errors; `None` when exact.
    pub mc_tolerance: Option<f64>,
}

impl GecTrace {
    pub fn len(&self) -> usize {
        self.prediction_errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prediction_errors.is_empty()
    }

    pub fn truncate(&self, t: usize) -> Self {
        let mut c = self.clone();
        c.prediction_errors.truncate(t);
        c.training_errors.truncate(t);
        c
    }
}

/// Burn-in term added to the right-hand side of the GEC inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum BurnIn {
    None,
    /// `2 sqrt(d H T) + eps H T`.
    Generic { eps: f64 },
    /// `factor * min(d, H T) + eps H T`.
    Linear { factor: f64, eps: f64 },
    /// `sqrt(d H T)`.
    SqrtDht,
}

impl BurnIn {
    pub fn value(&self, d: f64, horizon: usize, t: usize) -> f64 {
        let ht = (horizon * t) as f64;
        match *self {
            Self::None => 0.0,
            Self::Generic { eps } => 2.0 * (d * ht).sqrt() + eps * ht,
            Self::Linear { factor, eps } => factor * d.min(ht) + eps * ht,
            Self::SqrtDht => (d * ht).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GecCertificate {
    /// Smallest `d` for which the inequality holds at every prefix (`inf` if none).
    pub d_hat: f64,
    pub burn_in_used: BurnIn,
    pub discrepancy_kind: DiscrepancyKind,
    pub mc_tolerance: Option<f64>,
}

/// Largest violation of the GEC inequality over all prefixes at a given `d`.
pub fn gec_slack(trace: &GecTrace, burn: &BurnIn, d: f64) -> f64 {
    let mut pred = 0.0;
    let mut train = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for (t, (p, l)) in trace.prediction_errors.iter().zip(&trace.training_errors).enumerate() {
        pred += p;
        train += l;
        let rhs = (d * train.max(0.0)).sqrt() + burn.value(d, trace.horizon, t + 1);
        worst = worst.max(pred - rhs);
    }
    worst
}

/// Smallest `d >= 0` satisfying the inequality at every prefix, by bisection on the
/// monotone right-hand side. The returned value always satisfies the inequality.
pub fn gec_certificate(trace: &GecTrace, burn: BurnIn) -> GecCertificate {
    let holds = |d: f64| gec_slack(trace, &burn, d) <= 0.0;
    let d_hat = if trace.is_empty() || holds(0.0) {
        0.0
    } else {
        let mut hi = 1.0;
        while !holds(hi) && hi < 1e15 {
            hi *= 2.0;
        }
        if !holds(hi) {
            f64::INFINITY
        } else {
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if holds(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo <= 1e-12 * hi.max(1.0) {
                    break;
                }
            }
            hi
        }
    };
    GecCertificate {
        d_hat,
        burn_in_used: burn,
        discrepancy_kind: trace.discrepancy,
        mc_tolerance: trace.mc_tolerance,
    }
}
