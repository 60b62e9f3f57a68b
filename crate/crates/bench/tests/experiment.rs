use geclab::agents::AgentKind;
use geclab::decision::{Environment, TabularMdp};
use geclab::hypothesis::{make_perturbation_class, Model};
use geclab::io::LoadedClass;
use geclab_bench::experiment::{aggregate, checkpoint_times, summarize_seed, Experiment, Overrides, Stat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn experiment(kind: AgentKind, ov: &Overrides) -> Experiment {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mdp = TabularMdp::random(2, 2, 2, &mut rng);
    let class = make_perturbation_class(&Model::Mdp(mdp.clone()), 4, 0.2, &mut rng).unwrap();
    Experiment::new(Environment::Mdp(mdp), LoadedClass::Models { class, core: None }, Some(kind), 100, ov).unwrap()
}

#[test]
fn overrides_replace_prescribed_tuning() {
    let base = experiment(AgentKind::ModelBased, &Overrides::default());
    assert!(base.tuning.gamma > 0.0);
    assert_eq!(base.tuning.eta, 0.5);
    let ov = Overrides {
        gamma: Some(0.25),
        eta: Some(2.0),
        ..Overrides::default()
    };
    let e = experiment(AgentKind::ModelBased, &ov);
    assert_eq!((e.agent.gamma, e.agent.eta), (0.25, 2.0));
}

#[test]
fn summaries_are_consistent() {
    let e = experiment(
        AgentKind::ModelBased,
        &Overrides {
            track_gec: true,
            ..Overrides::default()
        },
    );
    let seeds: Vec<_> = (0..3)
        .map(|s| {
            let out = e.run_seed(s).unwrap();
            let cert = e.certificate(&out);
            assert!(cert.is_some());
            summarize_seed(s, &out, cert)
        })
        .collect();
    let finals: Vec<f64> = seeds.iter().map(|s| s.final_regret).collect();
    let r = aggregate(e.tuning.clone(), 4, seeds);
    let st = Stat::of(&finals);
    assert_eq!(r.final_regret.mean, st.mean);
    assert_eq!(r.checkpoints.iter().map(|c| c.t).collect::<Vec<_>>(), checkpoint_times(100));
    assert!(r.d_hat.is_some());
}

#[test]
fn same_seed_same_run() {
    let e = experiment(AgentKind::ModelBased, &Overrides::default());
    let a = e.run_seed(3).unwrap();
    let b = e.run_seed(3).unwrap();
    assert_eq!(a.records, b.records);
}
