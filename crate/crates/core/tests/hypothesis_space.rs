mod common;

use common::{all_histories, identity_pomdp};
use geclab::decision::{
    compose_exploration, enumerate_trajectories, evaluate_policy, ExplorationKind, HistoryPolicy, ObservableModel,
    TabularMdp, TabularPomdp,
};
use geclab::hypothesis::{
    audit_model_class, audit_value_class, best_memory_policy, evaluate_markov_mdp, make_perturbation_class,
    make_value_class, memory_policy_value, plan_history_tree, plan_mdp, random_memory_policy, solve_link_function,
    Model, HISTORY_NODE_CAP,
};
use geclab::psr::{latent_mdp_to_pomdp, psr_from_weakly_revealing_pomdp};
use geclab::decision::Environment;
use geclab::GecError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn all_markov_policies(h: usize, s: usize, a: usize) -> Vec<Vec<Vec<usize>>> {
    let slots = h * s;
    (0..a.pow(slots as u32))
        .map(|mut idx| {
            let mut p = vec![vec![0; s]; h];
            for k in 0..h {
                for x in 0..s {
                    p[k][x] = idx % a;
                    idx /= a;
                }
            }
            p
        })
        .collect()
}

#[test]
fn chain_with_terminal_reward() {
    let layer: Vec<Vec<Vec<f64>>> = vec![vec![vec![1.0]; 2]];
    let rewards = vec![vec![vec![0.0, 0.0]], vec![vec![0.0, 0.0]], vec![vec![1.0, 0.0]]];
    let mdp = TabularMdp::new(3, 1, 2, vec![layer.clone(), layer], rewards, vec![1.0]).unwrap();
    let sol = plan_mdp(&mdp);
    assert_eq!(sol.value, 1.0);
    assert_eq!(sol.policy[2], vec![0]);
}

#[test]
fn zero_rewards_choose_action_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mdp = TabularMdp::random(3, 2, 3, &mut rng);
    mdp.rewards.iter_mut().flatten().flatten().for_each(|r| *r = 0.0);
    let sol = plan_mdp(&mdp);
    assert_eq!(sol.value, 0.0);
    assert!(sol.policy.iter().flatten().all(|&a| a == 0));
}

#[test]
fn value_iteration_matches_policy_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let policies = all_markov_policies(3, 3, 2);
    for _ in 0..10 {
        let mdp = TabularMdp::random(3, 2, 3, &mut rng);
        let best = policies.iter().map(|p| evaluate_markov_mdp(&mdp, p)).fold(f64::NEG_INFINITY, f64::max);
        let sol = plan_mdp(&mdp);
        assert!((sol.value - best).abs() < 1e-12);
        // Bellman fixed point.
        for h in 0..3 {
            for s in 0..3 {
                for a in 0..2 {
                    let mut backup = mdp.rewards[h][s][a];
                    if h < 2 {
                        backup += (0..3).map(|s2| mdp.transitions[h][s][a][s2] * sol.values[h + 1][s2]).sum::<f64>();
                    }
                    assert!((sol.q[h][s][a] - backup).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn history_tree_on_identity_emission_matches_mdp() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let (mdp, p) = identity_pomdp(3, 2, 3, &mut rng);
        let want = plan_mdp(&mdp).value;
        let (v, pi) = plan_history_tree(&p, HISTORY_NODE_CAP).unwrap();
        assert!((v - want).abs() < 1e-10);
        assert!((evaluate_policy(&p, &pi).unwrap() - v).abs() < 1e-10);
        let psr = psr_from_weakly_revealing_pomdp(&p, 1).unwrap();
        let (vp, _) = plan_history_tree(&psr, HISTORY_NODE_CAP).unwrap();
        assert!((vp - want).abs() < 1e-10);
    }
}

#[test]
fn history_tree_horizon_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = TabularPomdp::random(2, 3, 2, 1, &mut rng);
    let (v, _) = plan_history_tree(&p, HISTORY_NODE_CAP).unwrap();
    let law = p.next_obs_dist(0, &p.initial, 0).unwrap();
    let want: f64 = (0..3).map(|o| law[o] * p.rewards[0][o][0].max(p.rewards[0][o][1])).sum();
    assert!((v - want).abs() < 1e-12);
}

#[test]
fn history_tree_on_latent_mdp_matches_policy_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = TabularMdp::random(2, 2, 2, &mut rng);
    let mut b = a.clone();
    // Component b reverses the transitions so the first observation is informative.
    for row in b.transitions.iter_mut().flatten().flatten() {
        row.reverse();
    }
    b.initial = vec![0.9, 0.1];
    let mut a = a;
    a.initial = vec![0.1, 0.9];
    let p = latent_mdp_to_pomdp(&[a, b], &[0.5, 0.5]).unwrap();
    let (v, _) = plan_history_tree(&p, HISTORY_NODE_CAP).unwrap();
    // Deterministic history policies: 2 codes at step 0, 8 at step 1.
    let mut best = f64::NEG_INFINITY;
    for bits in 0..(1u32 << 10) {
        let step0: Vec<Vec<f64>> = (0..2).map(|c| if bits >> c & 1 == 1 { vec![0.0, 1.0] } else { vec![1.0, 0.0] }).collect();
        let step1: Vec<Vec<f64>> = (0..8).map(|c| if bits >> (2 + c) & 1 == 1 { vec![0.0, 1.0] } else { vec![1.0, 0.0] }).collect();
        let pi = HistoryPolicy::MemoryTable { memory: 2, n_obs: 2, n_actions: 2, table: vec![step0, step1] };
        best = best.max(evaluate_policy(&p, &pi).unwrap());
    }
    assert!((v - best).abs() < 1e-12, "{v} vs {best}");
}

#[test]
fn history_tree_is_monotone_in_rewards() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = TabularPomdp::random(2, 2, 2, 3, &mut rng);
    let (v, _) = plan_history_tree(&p, HISTORY_NODE_CAP).unwrap();
    for k in 0..3 {
        let mut q = p.clone();
        q.rewards[k][1][0] = (q.rewards[k][1][0] + 0.05).min(1.0 / 3.0);
        let (w, _) = plan_history_tree(&q, HISTORY_NODE_CAP).unwrap();
        assert!(w >= v - 1e-15);
    }
}

#[test]
fn history_tree_cap_is_enforced() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = TabularPomdp::random(2, 2, 2, 3, &mut rng);
    assert!(matches!(plan_history_tree(&p, 10), Err(GecError::TooLarge(_))));
}

#[test]
fn perturbation_classes() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mdp = TabularMdp::random(3, 2, 3, &mut rng);
    let model = Model::Mdp(mdp.clone());
    let same = make_perturbation_class(&model, 5, 0.0, &mut rng).unwrap();
    assert!(same.hypotheses.iter().all(|h| h.model == model));
    assert_eq!(same.truth, 0);
    assert_eq!(same.prior[same.truth], 0.2);

    let mut distinct = 0;
    for seed in 0..100 {
        let mut r = ChaCha8Rng::seed_from_u64(1000 + seed);
        let m = TabularMdp::random(3, 2, 3, &mut r);
        let class = make_perturbation_class(&Model::Mdp(m), 20, 0.3, &mut r).unwrap();
        for h in &class.hypotheses {
            if let Model::Mdp(x) = &h.model {
                x.validate().unwrap();
            }
        }
        let mut values: Vec<f64> = class.hypotheses.iter().map(|h| h.value).collect();
        values.sort_by(f64::total_cmp);
        if values.windows(2).all(|w| w[1] - w[0] > 0.0) {
            distinct += 1;
        }
    }
    assert!(distinct >= 99, "{distinct}");
}

#[test]
fn realizability_audits() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mdp = TabularMdp::random(3, 2, 3, &mut rng);
    let env = Environment::Mdp(mdp.clone());
    let mut class = make_perturbation_class(&Model::Mdp(mdp.clone()), 4, 0.3, &mut rng).unwrap();
    let pi = HistoryPolicy::uniform(3, 3, 2);
    let trajs: Vec<_> = enumerate_trajectories(&env, &pi, 10_000).unwrap().into_iter().map(|w| w.trajectory).collect();
    let ok = audit_model_class(&class, &env, &trajs).unwrap();
    assert!(ok.pass);
    class.hypotheses.swap(0, 1);
    let bad = audit_model_class(&class, &env, &trajs).unwrap();
    assert!(!bad.pass);
    assert!(bad.location.unwrap().contains("prefix"));

    let vclass = make_value_class(&mdp, 3, 0.2, &mut rng).unwrap();
    assert!(audit_value_class(&vclass, &mdp).pass);
}

#[test]
fn value_hypothesis_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mdp = TabularMdp::random(3, 2, 3, &mut rng);
    let class = make_value_class(&mdp, 3, 0.2, &mut rng).unwrap();
    let f = class.hypothesis(&[1, 2, 0]);
    for h in 0..3 {
        for x in 0..3 {
            let a = f.greedy(h, x);
            assert_eq!(f.q[h][x][a], f.v(h, x));
            let scaled: Vec<f64> = f.q[h][x].iter().map(|q| 3.0 * q).collect();
            assert_eq!(geclab::decision::HistoryPolicy::GreedyOfQ { q: vec![vec![scaled]] }.action_probs(0, &[0], &[])[a], 1.0);
        }
    }
    assert_eq!(class.value_of_first(1), f.value(&class.initial));
}

#[test]
fn link_function_identity_emission() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (_, p) = identity_pomdp(3, 2, 3, &mut rng);
    let pi = random_memory_policy(1, 3, 2, 3, &mut rng);
    let sol = solve_link_function(&p, &pi).unwrap();
    let v = geclab::hypothesis::memory_values(&p, &pi).unwrap();
    for k in 0..3 {
        for (z, vz) in v[k].iter().enumerate() {
            for o in 0..3 {
                assert!((sol.link.tables[k][z * 3 + o] - vz[o]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn link_function_rejects_overcomplete() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let p = TabularPomdp::random(3, 2, 2, 2, &mut rng);
    let pi = random_memory_policy(1, 2, 2, 2, &mut rng);
    assert!(matches!(solve_link_function(&p, &pi), Err(GecError::LinkConstruction(_))));
}

#[test]
fn link_function_zeroes_the_bilinear_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..5 {
        let p = TabularPomdp::random(2, 3, 2, 3, &mut rng);
        let pi = random_memory_policy(1, 3, 2, 3, &mut rng);
        let sol = solve_link_function(&p, &pi).unwrap();
        assert!(sol.residual <= 1e-8);
        let g = &sol.link;
        for h in 0..3 {
            let roll_in = random_memory_policy(2, 3, 2, 3, &mut rng);
            let explore = compose_exploration(&roll_in, 2, ExplorationKind::VType, h, &[]).unwrap();
            let mut w = 0.0;
            for t in enumerate_trajectories(&p, &explore, 100_000).unwrap() {
                let tr = &t.trajectory;
                let (o, a) = (&tr.observations, &tr.actions);
                let loss = 2.0 * pi.action_prob(h, o, a, a[h]) * (tr.rewards[h] + g.value(h + 1, o, a)) - g.value(h, o, a);
                w += t.probability * loss;
            }
            assert!(w.abs() < 1e-8, "step {h}: {w}");
        }
    }
}

#[test]
fn best_memory_policy_dominates() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let p = TabularPomdp::random(2, 2, 2, 2, &mut rng);
    let (v, pi) = best_memory_policy(&p, 1, 1 << 12).unwrap();
    assert!((memory_policy_value(&p, &pi).unwrap() - v).abs() < 1e-12);
    assert!((evaluate_policy(&p, &pi).unwrap() - v).abs() < 1e-12);
    for _ in 0..50 {
        let q = random_memory_policy(1, 2, 2, 2, &mut rng);
        assert!(memory_policy_value(&p, &q).unwrap() <= v + 1e-12);
    }
    let _ = all_histories(1, 2, 2);
}
