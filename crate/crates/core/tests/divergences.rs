use geclab::divergence::{conditional_hellinger, hellinger_squared, kl, l1_distance, total_variation};
use proptest::prelude::*;

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn pair(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(prop_oneof![Just(0.0), 1e-6f64..1.0], n),
        prop::collection::vec(prop_oneof![Just(0.0), 1e-6f64..1.0], n),
    )
        .prop_filter("nonzero mass", |(p, q)| p.iter().sum::<f64>() > 0.0 && q.iter().sum::<f64>() > 0.0)
        .prop_map(|(p, q)| (normalize(p), normalize(q)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn l1_squared_bounded_by_hellinger((p, q) in (1usize..8).prop_flat_map(pair)) {
        prop_assert!(l1_distance(&p, &q).powi(2) <= 8.0 * hellinger_squared(&p, &q) + 1e-9);
    }

    #[test]
    fn hellinger_sandwiches_total_variation((p, q) in (1usize..8).prop_flat_map(pair)) {
        let h = hellinger_squared(&p, &q);
        let tv = total_variation(&p, &q);
        prop_assert!(h <= tv + 1e-12);
        prop_assert!(tv <= (2.0 * h).sqrt() + 1e-12);
    }

    #[test]
    fn pinsker((p, q) in (1usize..8).prop_flat_map(pair)) {
        let d = kl(&p, &q);
        prop_assert!(d.is_infinite() || 2.0 * total_variation(&p, &q).powi(2) <= d + 1e-9);
    }

    #[test]
    fn conditional_hellinger_bound(nx in 1usize..4, ny in 1usize..4, seed in prop::collection::vec(prop_oneof![Just(0.0), 1e-6f64..1.0], 32)) {
        let n = nx * ny;
        let p = normalize(seed[..n].iter().map(|x| x + 1e-9).collect());
        let q = normalize(seed[16..16 + n].iter().map(|x| x + 1e-9).collect());
        let pj: Vec<Vec<f64>> = p.chunks(ny).map(|c| c.to_vec()).collect();
        let qj: Vec<Vec<f64>> = q.chunks(ny).map(|c| c.to_vec()).collect();
        prop_assert!(conditional_hellinger(&pj, &qj) <= 4.0 * hellinger_squared(&p, &q) + 1e-9);
    }
}

#[test]
fn conditional_hellinger_of_product_laws() {
    let px = [0.3, 0.7];
    let py = [0.5, 0.5];
    let qy = [0.9, 0.1];
    let pj: Vec<Vec<f64>> = px.iter().map(|a| py.iter().map(|b| a * b).collect()).collect();
    let qj: Vec<Vec<f64>> = px.iter().map(|a| qy.iter().map(|b| a * b).collect()).collect();
    assert!((conditional_hellinger(&pj, &qj) - hellinger_squared(&py, &qy)).abs() < 1e-15);
}
