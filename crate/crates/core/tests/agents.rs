mod common;

use common::identity_pomdp;
use geclab::agents::{
    bellman_error, model_based_posterior_update, model_free_posterior_update, pobilinear_batch_mean, pobilinear_loss,
    pobilinear_posterior_update, psr_posterior_update, run_gps_idm, tuple_of, AgentClass, AgentConfig, BatchSample,
    JointPosterior, LossLedger, TrajectorySample, TransitionSample,
};
use geclab::complexity::{gec_certificate, gec_slack, BurnIn, DiscrepancyKind};
use geclab::decision::{
    compose_exploration, enumerate_trajectories, sample_episode, Environment, ExplorationKind, HistoryPolicy, ObservableModel,
    TabularMdp, TabularPomdp, Trajectory,
};
use geclab::divergence::hellinger_squared;
use geclab::hypothesis::{
    make_perturbation_class, make_pobilinear_class, make_value_class, plan_mdp, solve_link_function, HypothesisClass,
    LayeredValueClass, LinkFunction, Model, ModelHypothesis, PoBilinearHypothesis,
};
use geclab::psr::{psr_from_weakly_revealing_pomdp, CoreTestSet};
use geclab::rng::SeededSampler;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn deterministic_mdp(rng: &mut ChaCha8Rng) -> TabularMdp {
    let mut m = TabularMdp::random(3, 2, 3, rng);
    for layer in &mut m.transitions {
        for row in layer.iter_mut().flatten() {
            let j = rng.random_range(0..row.len());
            row.iter_mut().enumerate().for_each(|(k, p)| *p = if k == j { 1.0 } else { 0.0 });
        }
    }
    m
}

fn psr_class(pomdp: &TabularPomdp, count: usize, eps: f64, rng: &mut ChaCha8Rng) -> (HypothesisClass<ModelHypothesis>, CoreTestSet) {
    let base = make_perturbation_class(&Model::Pomdp(pomdp.clone()), count, eps, rng).unwrap();
    let hyps: Vec<ModelHypothesis> = base
        .hypotheses
        .iter()
        .map(|h| {
            let Model::Pomdp(p) = &h.model else { unreachable!() };
            ModelHypothesis::new(Model::Psr(psr_from_weakly_revealing_pomdp(p, 1).unwrap())).unwrap()
        })
        .collect();
    let core = match &hyps[0].model {
        Model::Psr(p) => p.core.clone(),
        _ => unreachable!(),
    };
    (HypothesisClass::uniform(hyps, 0).unwrap(), core)
}

#[test]
fn bellman_error_vanishes_for_optimal_q_on_deterministic_mdp() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mdp = deterministic_mdp(&mut rng);
    let q = geclab::hypothesis::ValueHypothesis { q: plan_mdp(&mdp).q };
    let uniform = HistoryPolicy::uniform(3, 3, 2);
    for e in 0..200 {
        let tau = sample_episode(&mdp, &uniform, &mut rng).unwrap();
        for h in 0..3 {
            let z = TransitionSample::from_trajectory(&tau, e, h, 0);
            assert!(bellman_error(&q, &z).abs() < 1e-12);
        }
    }
}

#[test]
fn bellman_error_has_zero_conditional_mean_for_optimal_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mdp = TabularMdp::random(3, 2, 2, &mut rng);
    let q = geclab::hypothesis::ValueHypothesis { q: plan_mdp(&mdp).q };
    let (x, a) = (1, 1);
    let n = 100_000;
    let errs: Vec<f64> = (0..n)
        .map(|_| {
            let y = geclab::decision::sample_index(&mdp.transitions[0][x][a], &mut rng);
            let z = TransitionSample {
                episode: 0,
                step: 0,
                explorer: 0,
                x,
                a,
                r: mdp.rewards[0][x][a],
                x_next: Some(y),
            };
            bellman_error(&q, &z)
        })
        .collect();
    let mean = errs.iter().sum::<f64>() / n as f64;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!(mean.abs() <= 3.0 * (var / n as f64).sqrt(), "mean {mean}");
}

fn single_transition_ledger(x: usize, a: usize, y: usize) -> LossLedger<TransitionSample> {
    let mut l = LossLedger::new(1);
    l.push(TransitionSample {
        episode: 0,
        step: 0,
        explorer: 0,
        x,
        a,
        r: 0.0,
        x_next: Some(y),
    });
    l
}

#[test]
fn log_likelihood_contribution_of_one_transition() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut m = TabularMdp::random(2, 1, 2, &mut rng);
    m.transitions[0][0][0] = vec![0.25, 0.75];
    let class = HypothesisClass::uniform(vec![ModelHypothesis::new(Model::Mdp(m)).unwrap()], 0).unwrap();
    let p = model_based_posterior_update(&single_transition_ledger(0, 0, 0), &class, 0.0, 0.5).unwrap();
    assert!((p.log_weights[0] - 0.5 * 0.25f64.ln()).abs() < 1e-15);
    assert!((0.5 * 0.25f64.ln() + 0.693_147_180_559_945_3).abs() < 1e-12);
}

#[test]
fn zero_likelihood_eliminates_permanently() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let truth = TabularMdp::random(2, 1, 2, &mut rng);
    let mut other = truth.clone();
    other.transitions[0][0][0] = vec![1.0, 0.0];
    let class = HypothesisClass::uniform(
        vec![ModelHypothesis::new(Model::Mdp(truth)).unwrap(), ModelHypothesis::new(Model::Mdp(other)).unwrap()],
        0,
    )
    .unwrap();
    let mut ledger = single_transition_ledger(0, 0, 1);
    let p = model_based_posterior_update(&ledger, &class, 1.0, 0.5).unwrap();
    assert_eq!(p.eliminated(), vec![1]);
    for _ in 0..20 {
        ledger.push(ledger.samples[0].clone());
        ledger.samples.last_mut().unwrap().x_next = Some(0);
    }
    let p = model_based_posterior_update(&ledger, &class, 1.0, 0.5).unwrap();
    assert_eq!(p.eliminated(), vec![1]);
    assert_eq!(p.probabilities()[1], 0.0);
}

fn initial_only_mdp(p0: f64) -> ModelHypothesis {
    let m = TabularMdp::new(1, 2, 1, vec![], vec![vec![vec![0.0], vec![0.0]]], vec![p0, 1.0 - p0]).unwrap();
    ModelHypothesis::new(Model::Mdp(m)).unwrap()
}

#[test]
fn trajectory_likelihood_closed_form() {
    let class = HypothesisClass::uniform(vec![initial_only_mdp(0.5), initial_only_mdp(0.25)], 0).unwrap();
    let mut ledger = LossLedger::new(1);
    ledger.push(TrajectorySample {
        episode: 0,
        step: 0,
        explorer: 0,
        trajectory: Trajectory {
            observations: vec![0, 2],
            actions: vec![0],
            rewards: vec![0.0],
        },
    });
    let w = psr_posterior_update(&ledger, &class, 0.0, 0.5).unwrap().probabilities();
    let (a, b) = (0.5f64.sqrt(), 0.25f64.sqrt());
    assert!((w[0] - a / (a + b)).abs() < 1e-15 && (w[1] - b / (a + b)).abs() < 1e-15);
    assert!((w[0] - 0.58579).abs() < 1e-5 && (w[1] - 0.41421).abs() < 1e-5);
}

#[test]
fn truth_has_the_largest_mean_log_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (_, pomdp) = identity_pomdp(3, 2, 3, &mut rng);
    let (class, _) = psr_class(&pomdp, 6, 0.3, &mut rng);
    let policy = HistoryPolicy::uniform(3, 3, 2);
    let mut sums = vec![0.0; class.len()];
    for _ in 0..10_000 {
        let tau = sample_episode(&pomdp, &policy, &mut rng).unwrap();
        for (s, h) in sums.iter_mut().zip(&class.hypotheses) {
            *s += geclab::agents::trajectory_log_likelihood(&h.model, &tau);
        }
    }
    let best = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(sums[class.truth], best);
}

fn pobilinear_setup(seed: u64) -> (TabularPomdp, HypothesisClass<PoBilinearHypothesis>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pomdp = TabularPomdp::random(2, 2, 2, 2, &mut rng);
    let class = make_pobilinear_class(&pomdp, 1, 3, 1 << 20, &mut rng).unwrap();
    (pomdp, class)
}

#[test]
fn link_function_batch_mean_is_centred() {
    let (pomdp, class) = pobilinear_setup(6);
    let f = &class.hypotheses[class.truth];
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for h in 0..2 {
        let explore = compose_exploration(&f.policy, 2, ExplorationKind::VType, h, &[]).unwrap();
        let batch: Vec<Trajectory> = (0..10_000).map(|_| sample_episode(&pomdp, &explore, &mut rng).unwrap()).collect();
        let losses: Vec<f64> = batch.iter().map(|t| pobilinear_loss(f, t, h)).collect();
        let mean = pobilinear_batch_mean(f, &batch, h, 10_000).unwrap();
        let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / 9_999.0;
        assert!(mean.abs() <= 3.0 * (var / 10_000.0).sqrt(), "step {h}: mean {mean}");
    }
}

#[test]
fn zero_link_and_zero_reward_give_zero_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pomdp = TabularPomdp::random(2, 2, 2, 2, &mut rng);
    pomdp.rewards.iter_mut().flatten().flatten().for_each(|r| *r = 0.0);
    let policy = geclab::hypothesis::random_memory_policy(1, 2, 2, 2, &mut rng);
    let f = PoBilinearHypothesis::new(policy.clone(), LinkFunction::zeros(1, 2, 2, 2), &pomdp);
    for _ in 0..100 {
        let tau = sample_episode(&pomdp, &policy, &mut rng).unwrap();
        assert_eq!(pobilinear_loss(&f, &tau, 0), 0.0);
        assert_eq!(pobilinear_loss(&f, &tau, 1), 0.0);
    }
}

#[test]
fn short_batch_is_rejected() {
    let (pomdp, class) = pobilinear_setup(8);
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let f = &class.hypotheses[0];
    let batch: Vec<Trajectory> = (0..3).map(|_| sample_episode(&pomdp, &f.policy, &mut rng).unwrap()).collect();
    assert!(matches!(pobilinear_batch_mean(f, &batch, 0, 4), Err(geclab::GecError::ShortBatch { got: 3, need: 4 })));
}

#[test]
fn no_tuning_leaves_the_prior_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mdp = TabularMdp::random(3, 2, 2, &mut rng);
    let env = Environment::Mdp(mdp.clone());
    let mut prior = geclab::decision::random_simplex(5, &mut rng);
    prior.iter_mut().for_each(|p| *p = 0.5 * *p + 0.1);
    let total: f64 = prior.iter().sum();
    prior.iter_mut().for_each(|p| *p /= total);

    let base = make_perturbation_class(&Model::Mdp(mdp.clone()), 5, 0.3, &mut rng).unwrap();
    let class = HypothesisClass::new(base.hypotheses, prior.clone(), 0).unwrap();
    let mut tl = LossLedger::new(2);
    let mut jl = LossLedger::new(2);
    for e in 0..10 {
        for h in 0..2 {
            let tau = sample_episode(&env, &class.hypotheses[0].policy, &mut rng).unwrap();
            tl.push(TransitionSample::from_trajectory(&tau, e, h, 0));
            jl.push(TrajectorySample {
                episode: e,
                step: h,
                explorer: 0,
                trajectory: tau,
            });
        }
    }
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
    assert!(close(&model_based_posterior_update(&tl, &class, 0.0, 0.0).unwrap().probabilities(), &prior));
    assert!(close(&psr_posterior_update(&jl, &class, 0.0, 0.0).unwrap().probabilities(), &prior));

    let vclass = make_value_class(&mdp, 3, 0.2, &mut rng).unwrap();
    let chain = model_free_posterior_update(&tl, &vclass, 0.0, 0.0).unwrap();
    for (idx, p) in chain.joint_enumeration(100).unwrap() {
        assert!((p - vclass.prior_of(&idx)).abs() < 1e-15);
    }

    let (pomdp, pclass) = pobilinear_setup(10);
    let mut bl = LossLedger::new(2);
    for h in 0..2 {
        bl.push(BatchSample {
            episode: 0,
            step: h,
            explorer: 0,
            trajectories: (0..4).map(|_| sample_episode(&pomdp, &pclass.hypotheses[0].policy, &mut rng).unwrap()).collect(),
        });
    }
    let p = pobilinear_posterior_update(&bl, &pclass, 0.0, 0.0, 4).unwrap().probabilities();
    assert!(close(&p, &pclass.prior));
}

#[test]
fn shifting_values_by_a_constant_changes_nothing() {
    let prior = [0.2, 0.3, 0.5];
    let v = [0.4, 0.1, 0.7];
    let shifted: Vec<f64> = v.iter().map(|x| x - 0.55).collect();
    let s = [-1.0, -3.0, -2.0];
    let a = JointPosterior::new(&prior, &v, 3.0, 0.5, &s).probabilities();
    let b = JointPosterior::new(&prior, &shifted, 3.0, 0.5, &s).probabilities();
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
}

#[test]
fn optimism_only_closed_form() {
    let w = JointPosterior::new(&[0.5, 0.5], &[1.0, 0.0], 2f64.ln(), 0.5, &[0.0, 0.0]).probabilities();
    assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
}

/// Joint law over tuples straight from the definition, with the per-step normalizers
/// summed explicitly.
fn joint_oracle(class: &LayeredValueClass, ledger: &LossLedger<TransitionSample>, gamma: f64, eta: f64) -> Vec<f64> {
    let sizes = class.layer_sizes();
    let horizon = sizes.len();
    let total: usize = sizes.iter().product();
    let loss = |h: usize, i: usize, j: Option<usize>| -> f64 {
        ledger
            .samples
            .iter()
            .filter(|z| z.step == h)
            .map(|z| {
                let next = match (j, z.x_next) {
                    (Some(j), Some(y)) => class.v(h + 1, j, y),
                    _ => 0.0,
                };
                (class.layers[h][i][z.x][z.a] - z.r - next).powi(2)
            })
            .sum()
    };
    let mut w: Vec<f64> = (0..total)
        .map(|k| {
            let idx = tuple_of(k, &sizes);
            let mut p = (gamma * class.value_of_first(idx[0])).exp();
            for h in 0..horizon {
                let j = (h + 1 < horizon).then(|| idx[h + 1]);
                let num = class.priors[h][idx[h]] * (-eta * loss(h, idx[h], j)).exp();
                let den: f64 = if j.is_some() {
                    (0..sizes[h]).map(|i| class.priors[h][i] * (-eta * loss(h, i, j)).exp()).sum()
                } else {
                    1.0
                };
                p *= num / den;
            }
            p
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chain_posterior_matches_joint_oracle(seed in 0u64..1000, horizon in 1usize..=4, per_layer in 1usize..=4, gamma in 0.0f64..3.0, eta in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = TabularMdp::random(2, 2, horizon, &mut rng);
        let mut class = make_value_class(&mdp, per_layer, 0.3, &mut rng).unwrap();
        class.priors = (0..horizon).map(|_| geclab::decision::random_simplex(per_layer, &mut rng).iter().map(|p| 0.5 * p + 0.5 / per_layer as f64).collect()).collect();
        let mut ledger = LossLedger::new(horizon);
        let uniform = HistoryPolicy::uniform(horizon, 2, 2);
        for e in 0..5 {
            let tau = sample_episode(&mdp, &uniform, &mut rng).unwrap();
            for h in 0..horizon {
                ledger.push(TransitionSample::from_trajectory(&tau, e, h, 0));
            }
        }
        let chain = model_free_posterior_update(&ledger, &class, gamma, eta).unwrap();
        let oracle = joint_oracle(&class, &ledger, gamma, eta);
        let joint = chain.joint_enumeration(10_000).unwrap();
        for ((_, p), q) in joint.iter().zip(&oracle) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
        let marg = chain.marginals();
        let sizes = class.layer_sizes();
        for h in 0..horizon {
            for i in 0..sizes[h] {
                let m: f64 = joint.iter().filter(|(idx, _)| idx[h] == i).map(|(_, p)| p).sum();
                prop_assert!((marg[h][i] - m).abs() <= 1e-12);
            }
        }
        prop_assert!(chain.normalization_error() <= 1e-12);
    }
}

fn check_records(records: &[geclab::agents::RegretRecord]) {
    let mut prev = 0.0;
    for r in records {
        assert!((0.0..=1.0).contains(&r.regret_step));
        assert!(r.regret_cum >= prev);
        assert!((0.0..=1.0 + 1e-12).contains(&r.mass_on_truth));
        prev = r.regret_cum;
    }
}

#[test]
fn singleton_classes_have_zero_regret() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mdp = TabularMdp::random(3, 2, 3, &mut rng);
    let env = Environment::Mdp(mdp.clone());
    let cfg = AgentConfig {
        episodes: 30,
        gamma: 1.0,
        ..Default::default()
    };
    let sampler = SeededSampler::new(1, 0);

    let mb = HypothesisClass::uniform(vec![ModelHypothesis::new(Model::Mdp(mdp.clone())).unwrap()], 0).unwrap();
    let vc = make_value_class(&mdp, 1, 0.0, &mut rng).unwrap();
    let (_, pomdp) = identity_pomdp(3, 2, 3, &mut rng);
    let (pc, core) = psr_class(&pomdp, 1, 0.1, &mut rng);
    let penv = Environment::Pomdp(pomdp);
    let (bpomdp, bclass) = pobilinear_setup(12);
    let truth = bclass.hypotheses[bclass.truth].clone();
    let single = HypothesisClass::uniform(vec![truth], 0).unwrap();
    let benv = Environment::Pomdp(bpomdp);
    let runs = [
        run_gps_idm(&env, AgentClass::ModelBased(&mb), &cfg, &sampler).unwrap(),
        run_gps_idm(&env, AgentClass::ModelFree(&vc), &cfg, &sampler).unwrap(),
        run_gps_idm(&penv, AgentClass::Psr { class: &pc, core: &core }, &cfg, &sampler).unwrap(),
        run_gps_idm(&benv, AgentClass::PoBilinear(&single), &AgentConfig { n_batch: 3, ..cfg.clone() }, &sampler).unwrap(),
    ];
    for out in &runs {
        assert!(out.records.iter().all(|r| r.regret_step.abs() < 1e-12 && (r.mass_on_truth - 1.0).abs() < 1e-12));
    }
    assert_eq!(runs[3].records.len(), 30 * 2 * 3);
    assert_eq!(runs[1].diagnostics.ledger_len, 30 * 3);
}

#[test]
fn runs_are_deterministic_and_well_formed() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mdp = TabularMdp::random(3, 2, 3, &mut rng);
    let env = Environment::Mdp(mdp.clone());
    let class = make_perturbation_class(&Model::Mdp(mdp.clone()), 8, 0.3, &mut rng).unwrap();
    let vc = make_value_class(&mdp, 3, 0.3, &mut rng).unwrap();
    let cfg = AgentConfig {
        episodes: 200,
        gamma: 2.0,
        ..Default::default()
    };
    for c in [AgentClass::ModelBased(&class), AgentClass::ModelFree(&vc)] {
        let a = run_gps_idm(&env, c, &cfg, &SeededSampler::new(5, 0)).unwrap();
        let b = run_gps_idm(&env, c, &cfg, &SeededSampler::new(5, 0)).unwrap();
        let d = run_gps_idm(&env, c, &cfg, &SeededSampler::new(6, 0)).unwrap();
        assert_eq!(a.records, b.records);
        assert_ne!(a.records, d.records);
        check_records(&a.records);
        assert!(a.diagnostics.max_normalization_error <= 1e-12);
    }
}

fn occupancy_oracle_model_based(env: &TabularMdp, class: &HypothesisClass<ModelHypothesis>, records: &[geclab::agents::RegretRecord]) -> Vec<f64> {
    let horizon = env.horizon;
    let mut out = Vec::new();
    for (t, r) in records.iter().enumerate() {
        let Model::Mdp(ft) = &class.hypotheses[r.hypothesis_index].model else { unreachable!() };
        let mut train = 0.0;
        for past in &records[..t] {
            let policy = &class.hypotheses[past.hypothesis_index].policy;
            for w in enumerate_trajectories(env, policy, 10_000).unwrap() {
                for h in 0..horizon - 1 {
                    let (x, a) = (w.trajectory.observations[h], w.trajectory.actions[h]);
                    train += w.probability * hellinger_squared(&ft.transitions[h][x][a], &env.transitions[h][x][a]);
                }
            }
        }
        out.push(train);
    }
    out
}

#[test]
fn model_based_trace_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mdp = TabularMdp::random(2, 2, 3, &mut rng);
    let env = Environment::Mdp(mdp.clone());
    let class = make_perturbation_class(&Model::Mdp(mdp.clone()), 5, 0.5, &mut rng).unwrap();
    let cfg = AgentConfig {
        episodes: 25,
        gamma: 3.0,
        track_gec: true,
        ..Default::default()
    };
    let out = run_gps_idm(&env, AgentClass::ModelBased(&class), &cfg, &SeededSampler::new(2, 0)).unwrap();
    let trace = out.trace.unwrap();
    assert_eq!(trace.discrepancy, DiscrepancyKind::TransitionHellinger);
    let oracle = occupancy_oracle_model_based(&mdp, &class, &out.records);
    for (a, b) in trace.training_errors.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    for (p, r) in trace.prediction_errors.iter().zip(&out.records) {
        assert!((p - (r.v_pred - r.v_realized)).abs() < 1e-15 && p.abs() <= 1.0);
    }
    let burn = BurnIn::Linear { factor: 2.0, eps: 0.01 };
    let c = gec_certificate(&trace, burn);
    assert!(gec_slack(&trace, &burn, c.d_hat) <= 0.0);
}

#[test]
fn psr_trace_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (_, pomdp) = identity_pomdp(2, 2, 2, &mut rng);
    let env = Environment::Pomdp(pomdp.clone());
    let (class, core) = psr_class(&pomdp, 4, 0.5, &mut rng);
    let cfg = AgentConfig {
        episodes: 15,
        gamma: 2.0,
        track_gec: true,
        ..Default::default()
    };
    let out = run_gps_idm(&env, AgentClass::Psr { class: &class, core: &core }, &cfg, &SeededSampler::new(3, 0)).unwrap();
    let trace = out.trace.unwrap();
    for (t, r) in out.records.iter().enumerate() {
        let ft = &class.hypotheses[r.hypothesis_index].model;
        let mut train = 0.0;
        for past in &out.records[..t] {
            for h in 0..2 {
                let policy = compose_exploration(
                    &class.hypotheses[past.hypothesis_index].policy,
                    2,
                    ExplorationKind::PsrType,
                    h,
                    &core.action_sequences(h),
                )
                .unwrap();
                let bc: f64 = enumerate_trajectories(&pomdp, &policy, 10_000)
                    .unwrap()
                    .iter()
                    .map(|w| {
                        let tau = &w.trajectory;
                        let pi = policy.sequence_probability(&tau.observations, &tau.actions, 2);
                        (w.probability * pi * ft.dynamics_probability(tau.emitted(), &tau.actions)).sqrt()
                    })
                    .sum();
                train += (1.0 - bc).max(0.0);
            }
        }
        assert!((trace.training_errors[t] - train).abs() < 1e-10, "{t}: {} vs {train}", trace.training_errors[t]);
    }
}

#[test]
fn model_free_trace_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mdp = TabularMdp::random(2, 2, 3, &mut rng);
    let env = Environment::Mdp(mdp.clone());
    let vc = make_value_class(&mdp, 2, 0.3, &mut rng).unwrap();
    let cfg = AgentConfig {
        episodes: 20,
        gamma: 1.0,
        track_gec: true,
        ..Default::default()
    };
    let out = run_gps_idm(&env, AgentClass::ModelFree(&vc), &cfg, &SeededSampler::new(4, 0)).unwrap();
    let trace = out.trace.unwrap();
    let sizes = vc.layer_sizes();
    for (t, r) in out.records.iter().enumerate() {
        let ft = vc.hypothesis(&tuple_of(r.hypothesis_index, &sizes));
        let mut train = 0.0;
        for past in &out.records[..t] {
            let fs = vc.hypothesis(&tuple_of(past.hypothesis_index, &sizes));
            for w in enumerate_trajectories(&mdp, &fs.policy(), 10_000).unwrap() {
                for h in 0..3 {
                    let (x, a) = (w.trajectory.observations[h], w.trajectory.actions[h]);
                    let next: f64 = if h < 2 {
                        mdp.transitions[h][x][a].iter().enumerate().map(|(y, p)| p * ft.v(h + 1, y)).sum()
                    } else {
                        0.0
                    };
                    train += w.probability * (ft.q[h][x][a] - mdp.rewards[h][x][a] - next).powi(2);
                }
            }
        }
        assert!((trace.training_errors[t] - train).abs() < 1e-10);
    }
}

#[test]
fn link_solution_of_the_truth_is_in_the_class() {
    let (pomdp, class) = pobilinear_setup(17);
    let truth = &class.hypotheses[class.truth];
    let link = solve_link_function(&pomdp, &truth.policy).unwrap().link;
    assert_eq!(truth.link, link);
}
