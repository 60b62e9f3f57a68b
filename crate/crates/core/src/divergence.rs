//! Divergences between finite distributions (natural logarithms throughout).

/// Probabilities below this are treated as exact zeros.
pub const FLUSH: f64 = 1e-300;

fn flush(x: f64) -> f64 {
    if x < FLUSH {
        0.0
    } else {
        x
    }
}

/// `1 - sum_x sqrt(P(x) Q(x))`, clamped to `[0, 1]`.
pub fn hellinger_squared(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions over different supports");
    let bc: f64 = p.iter().zip(q).map(|(a, b)| (flush(*a) * flush(*b)).sqrt()).sum();
    (1.0 - bc).clamp(0.0, 1.0)
}

/// `0.5 * ||P - Q||_1`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions over different supports");
    0.5 * l1_distance(p, q)
}

pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// `sum_x P(x) ln(P(x)/Q(x))`, or `f64::INFINITY` when `P` is not absolutely
/// continuous with respect to `Q`.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions over different supports");
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let (a, b) = (flush(a), flush(b));
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return f64::INFINITY;
        }
        s += a * (a / b).ln();
    }
    s.max(0.0)
}

/// `E_{X ~ P_X} D_H^2(P_{Y|X}, Q_{Y|X})` for joint laws stored row-major as `[x][y]`.
/// Rows where `Q_X(x) = 0` contribute distance 1.
pub fn conditional_hellinger(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    assert_eq!(p.len(), q.len(), "joint laws over different supports");
    p.iter()
        .zip(q)
        .map(|(pr, qr)| {
            let px: f64 = pr.iter().sum();
            let qx: f64 = qr.iter().sum();
            if flush(px) == 0.0 {
                return 0.0;
            }
            if flush(qx) == 0.0 {
                return px;
            }
            let pc: Vec<f64> = pr.iter().map(|v| v / px).collect();
            let qc: Vec<f64> = qr.iter().map(|v| v / qx).collect();
            px * hellinger_squared(&pc, &qc)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_distributions() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(hellinger_squared(&p, &p), 0.0);
        assert_eq!(total_variation(&p, &p), 0.0);
        assert_eq!(kl(&p, &p), 0.0);
    }

    #[test]
    fn disjoint_point_masses() {
        let p = [1.0, 0.0];
        let q = [0.0, 1.0];
        assert_eq!(hellinger_squared(&p, &q), 1.0);
        assert_eq!(total_variation(&p, &q), 1.0);
        assert_eq!(kl(&p, &q), f64::INFINITY);
    }

    #[test]
    fn bernoulli_values() {
        let h = hellinger_squared(&[0.5, 0.5], &[0.9, 0.1]);
        assert_relative_eq!(h, 1.0 - (0.45f64.sqrt() + 0.05f64.sqrt()), epsilon = 1e-15);
        assert_relative_eq!(h, 0.10557, epsilon = 1e-5);
        assert_relative_eq!(total_variation(&[0.25, 0.75], &[0.75, 0.25]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn underflow_is_flushed() {
        assert_eq!(kl(&[1e-310, 1.0 - 1e-310], &[0.0, 1.0]), 0.0);
    }
}
