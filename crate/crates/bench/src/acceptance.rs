//! The acceptance suite: one pass/fail line per criterion, with pinned tolerances
//! and instance seeds.

use crate::experiment::{psr_perturbation_class, Experiment, Overrides, Tuning};
use anyhow::Result;
use geclab::agents::tuning::{default_epsilon, eluder_gec_bound, witness_gec_bound};
use geclab::agents::{
    model_based_posterior_update, model_free_posterior_update, pobilinear_batch_mean, pobilinear_loss,
    pobilinear_posterior_update, psr_posterior_update, tuple_of, AgentKind, BatchSample, LossLedger, RunOutput,
    TrajectorySample, TransitionSample,
};
use geclab::complexity::{elliptical_potential_check, l2_eluder_check, EluderInstance, GecCertificate};
use geclab::decision::{
    compose_exploration, random_simplex, sample_episode, Environment, ExplorationKind, HistoryPolicy, ObservableModel,
    TabularMdp, TabularPomdp,
};
use geclab::divergence::{conditional_hellinger, hellinger_squared, l1_distance};
use geclab::hypothesis::{
    evaluate_markov_mdp, make_perturbation_class, make_pobilinear_class, make_value_class, plan_history_tree, plan_mdp,
    HypothesisClass, LayeredValueClass, Model, HISTORY_NODE_CAP,
};
use geclab::io::LoadedClass;
use geclab::psr::{
    check_generalized_regular, check_regular, psr_from_decodable_pomdp, psr_from_weakly_revealing_pomdp, Decoder,
    OperatorPsr,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::time::Instant;

pub const SEEDS: std::ops::Range<u64> = 0..10;
pub const MB_T: usize = 2000;
pub const PSR_T: usize = 1000;
pub const PO_K: usize = 5000;
pub const DECAY_RATIO: f64 = 1.0 / 3.0;
pub const MASS_MIN: f64 = 0.5;
pub const MB_SECONDS: f64 = 60.0;
pub const PSR_SECONDS: f64 = 120.0;
pub const EMBED_TOL: f64 = 1e-10;
pub const BOUND_TOL: f64 = 1e-9;
pub const POSTERIOR_TOL: f64 = 1e-12;
pub const PLAN_TOL: f64 = 1e-12;
pub const TREE_TOL: f64 = 1e-10;
pub const RANDOM_INSTANCES: usize = 10_000;
const CAP: usize = 1_000_000;

const MB_INSTANCE_SEED: u64 = 11;
const PSR_INSTANCE_SEED: u64 = 12;
const PO_INSTANCE_SEED: u64 = 13;

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2}. {}: {} ({:.2} s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

pub const NAMES: [&str; 10] = [
    "sublinear regret, model-based MDP",
    "sublinear regret, PSR agent",
    "PSR embedding exactness",
    "regularity certificates",
    "divergence inequalities",
    "elliptical potential and l2 eluder bounds",
    "GEC certificate consistency",
    "posterior machinery exactness",
    "planning oracle exactness",
    "PO-bilinear agent sanity",
];

/// Ten seeded runs of one experiment.
pub struct SeedRuns {
    pub tuning: Tuning,
    pub outputs: Vec<RunOutput>,
    pub certificates: Vec<Option<GecCertificate>>,
    pub seconds: f64,
}

impl SeedRuns {
    fn run(exp: &Experiment) -> Result<Self> {
        let start = Instant::now();
        let outputs = SEEDS.map(|s| exp.run_seed(s)).collect::<Result<Vec<_>>>()?;
        let certificates = outputs.iter().map(|o| exp.certificate(o)).collect();
        Ok(Self {
            tuning: exp.tuning.clone(),
            outputs,
            certificates,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn mean_regret_rate(&self, t: usize) -> f64 {
        self.outputs.iter().map(|o| o.records[t - 1].regret_cum / t as f64).sum::<f64>() / self.outputs.len() as f64
    }

    fn mean_mass(&self, t: usize) -> f64 {
        self.outputs.iter().map(|o| o.records[t - 1].mass_on_truth).sum::<f64>() / self.outputs.len() as f64
    }

    fn max_d_hat(&self) -> f64 {
        self.certificates.iter().map(|c| c.as_ref().map_or(f64::INFINITY, |c| c.d_hat)).fold(0.0, f64::max)
    }

    fn max_normalization_error(&self) -> f64 {
        self.outputs.iter().map(|o| o.diagnostics.max_normalization_error).fold(0.0, f64::max)
    }
}

/// 3-state, 2-action, horizon-3 MDP with a 20-model perturbation class.
pub fn model_based_experiment() -> Result<Experiment> {
    let mut rng = ChaCha8Rng::seed_from_u64(MB_INSTANCE_SEED);
    let mdp = TabularMdp::random(3, 2, 3, &mut rng);
    let class = make_perturbation_class(&Model::Mdp(mdp.clone()), 20, 0.1, &mut rng)?;
    Experiment::new(
        Environment::Mdp(mdp),
        LoadedClass::Models { class, core: None },
        Some(AgentKind::ModelBased),
        MB_T,
        &Overrides {
            track_gec: true,
            ..Overrides::default()
        },
    )
}

/// Identity-emission POMDP (S = O = 3, A = 2, H = 3) with a 10-PSR class.
pub fn psr_experiment() -> Result<Experiment> {
    let mut rng = ChaCha8Rng::seed_from_u64(PSR_INSTANCE_SEED);
    let env = Environment::Pomdp(TabularPomdp::from_mdp(&TabularMdp::random(3, 2, 3, &mut rng)));
    let class = psr_perturbation_class(&env, 10, 0.1, 1, &mut rng)?;
    Experiment::new(
        env,
        class,
        Some(AgentKind::Psr),
        PSR_T,
        &Overrides {
            track_gec: true,
            ..Overrides::default()
        },
    )
}

/// S = O = A = H = 2 POMDP; memory-1 policies, the optimal one first, and their links.
pub fn pobilinear_experiment() -> Result<Experiment> {
    let mut rng = ChaCha8Rng::seed_from_u64(PO_INSTANCE_SEED);
    let pomdp = TabularPomdp::random(2, 2, 2, 2, &mut rng);
    let class = make_pobilinear_class(&pomdp, 1, 8, 1 << 20, &mut rng)?;
    Experiment::new(
        Environment::Pomdp(pomdp),
        LoadedClass::PoBilinear(class),
        Some(AgentKind::PoBilinear),
        PO_K,
        &Overrides::default(),
    )
}

/// Lazily computed shared runs.
#[derive(Default)]
pub struct Suite {
    mb: Option<Result<SeedRuns, String>>,
    psr: Option<Result<SeedRuns, String>>,
    po: Option<Result<(SeedRuns, SeedRuns), String>>,
}

fn cached<T>(slot: &mut Option<Result<T, String>>, f: impl FnOnce() -> Result<T>) -> Result<&T, String> {
    slot.get_or_insert_with(|| f().map_err(|e| format!("{e:#}"))).as_ref().map_err(|e| e.clone())
}

impl Suite {
    fn mb(&mut self) -> Result<&SeedRuns, String> {
        cached(&mut self.mb, || SeedRuns::run(&model_based_experiment()?))
    }

    fn psr(&mut self) -> Result<&SeedRuns, String> {
        cached(&mut self.psr, || SeedRuns::run(&psr_experiment()?))
    }

    /// Agent runs and uniform-selection runs on the same seeds.
    fn po(&mut self) -> Result<&(SeedRuns, SeedRuns), String> {
        cached(&mut self.po, || {
            let exp = pobilinear_experiment()?;
            let uniform = exp.with_agent(|a| {
                a.gamma = 0.0;
                a.eta = 0.0;
            });
            Ok((SeedRuns::run(&exp)?, SeedRuns::run(&uniform)?))
        })
    }

    pub fn run(&mut self, id: usize) -> CriterionResult {
        let start = Instant::now();
        let outcome = match id {
            1 => self.criterion1(),
            2 => self.criterion2(),
            3 => criterion3(),
            4 => criterion4(),
            5 => Ok(criterion5()),
            6 => criterion6(),
            7 => self.criterion7(),
            8 => self.criterion8(),
            9 => Ok(criterion9()),
            10 => self.criterion10(),
            _ => Err(format!("no criterion {id}")),
        };
        let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        CriterionResult {
            id,
            name: NAMES.get(id.wrapping_sub(1)).copied().unwrap_or("unknown"),
            pass,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn decay(runs: &SeedRuns, early: usize, late: usize, seconds: f64) -> (bool, String) {
        let (a, b) = (runs.mean_regret_rate(early), runs.mean_regret_rate(late));
        let mass = runs.mean_mass(late);
        let ratio = b / a;
        let pass = ratio < DECAY_RATIO && mass > MASS_MIN && runs.seconds < seconds;
        (
            pass,
            format!(
                "Reg/T {a:.5} at T={early}, {b:.5} at T={late}, ratio {ratio:.3} (< {DECAY_RATIO:.3}); mass on truth {mass:.3} (> {MASS_MIN}); gamma {:.3}; runs {:.1} s (< {seconds} s)",
                runs.tuning.gamma, runs.seconds
            ),
        )
    }

    fn criterion1(&mut self) -> Result<(bool, String), String> {
        Ok(Self::decay(self.mb()?, MB_T / 10, MB_T, MB_SECONDS))
    }

    fn criterion2(&mut self) -> Result<(bool, String), String> {
        Ok(Self::decay(self.psr()?, PSR_T / 10, PSR_T, PSR_SECONDS))
    }

    fn criterion7(&mut self) -> Result<(bool, String), String> {
        let mb = self.mb()?;
        let d_mb = mb.max_d_hat();
        let eluder = eluder_gec_bound(6.0, 3, MB_T);
        let witness = witness_gec_bound(6.0, 3, MB_T, default_epsilon(3, MB_T), 1.0);
        let psr = self.psr()?;
        let d_psr = psr.max_d_hat();
        let l4 = psr.tuning.d_gec;
        let pass = d_mb <= eluder && d_mb <= witness && d_psr <= l4;
        Ok((
            pass,
            format!(
                "MDP max d_hat {d_mb:.3} <= {eluder:.1} (eluder form) and <= {witness:.1} (witness form); PSR max d_hat {d_psr:.3} <= {l4:.1} ({})",
                psr.tuning.d_gec_source
            ),
        ))
    }

    fn criterion8(&mut self) -> Result<(bool, String), String> {
        let (chain_err, chain_n) = chain_marginal_check();
        let prior_err = zero_tuning_check().map_err(|e| format!("{e:#}"))?;
        let mut norm: f64 = 0.0;
        norm = norm.max(self.mb()?.max_normalization_error());
        norm = norm.max(self.psr()?.max_normalization_error());
        let (a, u) = self.po()?;
        norm = norm.max(a.max_normalization_error()).max(u.max_normalization_error());
        let pass = chain_err <= POSTERIOR_TOL && prior_err <= POSTERIOR_TOL && norm <= POSTERIOR_TOL;
        Ok((
            pass,
            format!(
                "chain vs joint max error {chain_err:.2e} over {chain_n} classes; zero-tuning posterior vs prior {prior_err:.2e} (4 agents); run normalization error {norm:.2e} (tol {POSTERIOR_TOL:e})"
            ),
        ))
    }

    fn criterion10(&mut self) -> Result<(bool, String), String> {
        let (centred, link_detail) = link_centring_check().map_err(|e| format!("{e:#}"))?;
        let (agent, uniform) = self.po()?;
        let final_mean = |r: &SeedRuns| r.outputs.iter().map(|o| o.records.last().map_or(0.0, |x| x.regret_cum)).sum::<f64>() / r.outputs.len() as f64;
        let (ra, ru) = (final_mean(agent), final_mean(uniform));
        let wins = agent
            .outputs
            .iter()
            .zip(&uniform.outputs)
            .filter(|(a, u)| a.records.last().map(|x| x.regret_cum) < u.records.last().map(|x| x.regret_cum))
            .count();
        let episodes = agent.outputs[0].records.len();
        Ok((
            centred && ra < ru,
            format!(
                "{link_detail}; mean cumulative regret over {episodes} episodes: agent {ra:.2} < uniform {ru:.2} (agent lower on {wins}/10 seeds; N_batch {}, {} updates)",
                agent.tuning.n_batch, agent.tuning.posterior_updates
            ),
        ))
    }
}

pub fn run_all() -> Vec<CriterionResult> {
    run_selected(&(1..=10).collect::<Vec<_>>())
}

pub fn run_selected(ids: &[usize]) -> Vec<CriterionResult> {
    let mut suite = Suite::default();
    ids.iter().map(|&id| suite.run(id)).collect()
}

/// Every `(observations, actions)` pair of length `h`.
fn all_histories(h: usize, n_obs: usize, n_actions: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = (n_obs * n_actions).pow(h as u32);
    (0..n)
        .map(|mut idx| {
            let mut obs = vec![0; h];
            let mut acts = vec![0; h];
            for k in (0..h).rev() {
                acts[k] = idx % n_actions;
                idx /= n_actions;
                obs[k] = idx % n_obs;
                idx /= n_obs;
            }
            (obs, acts)
        })
        .collect()
}

/// POMDP with one heavy-diagonal emission matrix shared by all steps.
pub fn revealing_pomdp<R: Rng>(states: usize, actions: usize, horizon: usize, rng: &mut R) -> TabularPomdp {
    let mut p = TabularPomdp::random(states, states, actions, horizon, rng);
    let e: Vec<Vec<f64>> = (0..states)
        .map(|s| {
            let mut row: Vec<f64> = (0..states).map(|_| rng.random::<f64>() * 0.3).collect();
            row[s] += 1.0;
            let t: f64 = row.iter().sum();
            row.iter().map(|x| x / t).collect()
        })
        .collect();
    p.emissions = vec![e; horizon];
    p
}

/// Block POMDP: state `s` emits only observations `2s` and `2s + 1`.
pub fn block_pomdp<R: Rng>(states: usize, actions: usize, horizon: usize, rng: &mut R) -> (TabularPomdp, Decoder) {
    let mut p = TabularPomdp::random(states, 2 * states, actions, horizon, rng);
    for layer in &mut p.emissions {
        for (s, row) in layer.iter_mut().enumerate() {
            let u: f64 = rng.random_range(0.05..0.95);
            row.iter_mut().for_each(|x| *x = 0.0);
            row[2 * s] = u;
            row[2 * s + 1] = 1.0 - u;
        }
    }
    let partition = vec![(0..2 * states).map(|o| o / 2).collect(); horizon];
    (p, Decoder::block(partition))
}

/// Largest deviation between operator and forward-algorithm probabilities over every
/// history prefix.
fn embedding_error(psr: &OperatorPsr, pomdp: &TabularPomdp) -> f64 {
    let mut worst: f64 = 0.0;
    for len in 1..=pomdp.horizon {
        for (o, a) in all_histories(len, pomdp.observations, pomdp.actions) {
            worst = worst.max((psr.dynamics_probability(&o, &a) - pomdp.dynamics_probability(&o, &a)).abs());
        }
    }
    worst
}

fn criterion3() -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut trajectories = 0;
    for _ in 0..50 {
        let p = revealing_pomdp(3, 2, 3, &mut rng);
        match psr_from_weakly_revealing_pomdp(&p, 1) {
            Ok(psr) => worst = worst.max(embedding_error(&psr, &p)),
            Err(_) => failures += 1,
        }
        trajectories += 6usize.pow(3);
    }
    for _ in 0..20 {
        let (p, dec) = block_pomdp(2, 2, 3, &mut rng);
        match psr_from_decodable_pomdp(&p, &dec) {
            Ok(psr) => worst = worst.max(embedding_error(&psr, &p)),
            Err(_) => failures += 1,
        }
        trajectories += 8usize.pow(3);
    }
    Ok((
        failures == 0 && worst <= EMBED_TOL,
        format!(
            "50 revealing + 20 decodable POMDPs, {trajectories} full trajectories (all prefixes checked); max error {worst:.2e} (tol {EMBED_TOL:e}); construction failures {failures}"
        ),
    ))
}

fn criterion4() -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = Vec::new();
    let mut min_identity_margin = f64::INFINITY;
    for i in 0..34 {
        let s = 2 + i % 3;
        let p = TabularPomdp::from_mdp(&TabularMdp::random(s, 2, 3, &mut rng));
        let alpha = psr_from_weakly_revealing_pomdp(&p, 1)
            .and_then(|psr| check_generalized_regular(&psr, CAP))
            .map(|g| g.alpha);
        match alpha {
            Ok(a) if a >= 1.0 / (s as f64).sqrt() => min_identity_margin = min_identity_margin.min(a - 1.0 / (s as f64).sqrt()),
            _ => failures.push(format!("identity instance {i}")),
        }
    }
    let mut min_decodable = f64::INFINITY;
    for i in 0..33 {
        let (p, dec) = block_pomdp(2, 2, 3, &mut rng);
        match psr_from_decodable_pomdp(&p, &dec).and_then(|psr| check_generalized_regular(&psr, CAP)) {
            Ok(g) if g.alpha >= 1.0 - 1e-12 => min_decodable = min_decodable.min(g.alpha),
            _ => failures.push(format!("decodable instance {i}")),
        }
    }
    let mut regular = 0;
    let mut skipped = 0;
    let mut min_gap = f64::INFINITY;
    while regular < 33 {
        let p = revealing_pomdp(3, 2, 3, &mut rng);
        let Ok(psr) = psr_from_weakly_revealing_pomdp(&p, 1) else {
            skipped += 1;
            continue;
        };
        let Ok(r) = check_regular(&psr, CAP) else {
            skipped += 1;
            continue;
        };
        if r.ranks[..2].iter().any(|&d| d != 3) {
            skipped += 1;
            continue;
        }
        match check_generalized_regular(&psr, CAP) {
            Ok(g) if g.alpha >= r.alpha - BOUND_TOL => min_gap = min_gap.min(g.alpha - r.alpha),
            _ => failures.push(format!("regular instance {regular}")),
        }
        regular += 1;
    }
    Ok((
        failures.is_empty(),
        format!(
            "100 instances: identity alpha - 1/sqrt(S) >= {min_identity_margin:.3e}; decodable min alpha {min_decodable:.6}; generalized - regular alpha >= {min_gap:.3e} ({skipped} rank-deficient draws redrawn); failures {}",
            if failures.is_empty() { "none".to_string() } else { failures.join(", ") }
        ),
    ))
}

fn random_law<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() }).collect();
    if v.iter().all(|&x| x == 0.0) {
        v[rng.random_range(0..n)] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn criterion5() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_l1: f64 = f64::NEG_INFINITY;
    let mut worst_cond: f64 = f64::NEG_INFINITY;
    for _ in 0..RANDOM_INSTANCES {
        let n = rng.random_range(1..=8);
        let (p, q) = (random_law(n, &mut rng), random_law(n, &mut rng));
        let h = hellinger_squared(&p, &q);
        worst_l1 = worst_l1.max(l1_distance(&p, &q).powi(2) - 8.0 * h);
        let (nx, ny) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let (pj, qj) = (random_law(nx * ny, &mut rng), random_law(nx * ny, &mut rng));
        let rows = |v: &[f64]| v.chunks(ny).map(|c| c.to_vec()).collect::<Vec<_>>();
        worst_cond = worst_cond.max(conditional_hellinger(&rows(&pj), &rows(&qj)) - 4.0 * hellinger_squared(&pj, &qj));
    }
    (
        worst_l1 <= BOUND_TOL && worst_cond <= BOUND_TOL,
        format!(
            "{RANDOM_INSTANCES} pairs each: max(|P-Q|_1^2 - 8 H^2) = {worst_l1:.3e}, max(cond. H^2 - 4 H^2) = {worst_cond:.3e} (tol {BOUND_TOL:e})"
        ),
    )
}

fn criterion6() -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut potential_fail = 0;
    let mut min_potential_margin = f64::INFINITY;
    for _ in 0..RANDOM_INSTANCES {
        let d = rng.random_range(1..=5);
        let n = rng.random_range(0..=50);
        let xs: Vec<DVector<f64>> = (0..n).map(|_| DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0))).collect();
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let lambda0 = &a * a.transpose() + DMatrix::identity(d, d) * rng.random_range(0.01..2.0);
        let c = elliptical_potential_check(&xs, &lambda0).map_err(|e| e.to_string())?;
        if !c.pass {
            potential_fail += 1;
        }
        min_potential_margin = min_potential_margin.min(c.rhs - c.lhs);
    }
    let mut eluder_fail = 0;
    let mut min_eluder_margin = f64::INFINITY;
    for _ in 0..RANDOM_INSTANCES {
        let d = rng.random_range(1..=5);
        let t_ = rng.random_range(1..=50);
        let (ni, nj) = (rng.random_range(1..4), rng.random_range(1..4));
        let w = (0..t_).map(|_| (0..nj).map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).collect()).collect();
        let x = (0..t_).map(|_| (0..ni).map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).collect()).collect();
        let p = (0..t_).map(|_| random_simplex(ni, &mut rng)).collect();
        let inst = EluderInstance::tight(w, x, p, rng.random_range(0.1..3.0)).map_err(|e| e.to_string())?;
        let c = l2_eluder_check(&inst);
        if !c.pass {
            eluder_fail += 1;
        }
        min_eluder_margin = min_eluder_margin.min(c.rhs - c.lhs);
    }
    Ok((
        potential_fail == 0 && eluder_fail == 0,
        format!(
            "{RANDOM_INSTANCES} potential instances ({potential_fail} failures, min rhs - lhs {min_potential_margin:.3e}); {RANDOM_INSTANCES} eluder instances ({eluder_fail} failures, min rhs - lhs {min_eluder_margin:.3e})"
        ),
    ))
}

/// Joint law over tuples straight from the definition.
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

/// Chain posterior vs the joint oracle and its own marginals, `|H_h| <= 4`, `H <= 4`.
fn chain_marginal_check() -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for horizon in 1..=4 {
        for per_layer in 1..=4 {
            for _ in 0..3 {
                let mdp = TabularMdp::random(2, 2, horizon, &mut rng);
                let Ok(mut class) = make_value_class(&mdp, per_layer, 0.3, &mut rng) else {
                    return (f64::INFINITY, count);
                };
                class.priors = (0..horizon)
                    .map(|_| random_simplex(per_layer, &mut rng).iter().map(|p| 0.5 * p + 0.5 / per_layer as f64).collect())
                    .collect();
                let mut ledger = LossLedger::new(horizon);
                let uniform = HistoryPolicy::uniform(horizon, 2, 2);
                for e in 0..5 {
                    let Ok(tau) = sample_episode(&mdp, &uniform, &mut rng) else {
                        return (f64::INFINITY, count);
                    };
                    for h in 0..horizon {
                        ledger.push(TransitionSample::from_trajectory(&tau, e, h, 0));
                    }
                }
                let (gamma, eta) = (rng.random_range(0.0..3.0), rng.random_range(0.0..2.0));
                let Ok(chain) = model_free_posterior_update(&ledger, &class, gamma, eta) else {
                    return (f64::INFINITY, count);
                };
                let Ok(joint) = chain.joint_enumeration(10_000) else {
                    return (f64::INFINITY, count);
                };
                let oracle = joint_oracle(&class, &ledger, gamma, eta);
                for ((_, p), q) in joint.iter().zip(&oracle) {
                    worst = worst.max((p - q).abs());
                }
                let marg = chain.marginals();
                for (h, mh) in marg.iter().enumerate() {
                    for (i, m) in mh.iter().enumerate() {
                        let s: f64 = joint.iter().filter(|(idx, _)| idx[h] == i).map(|(_, p)| p).sum();
                        worst = worst.max((m - s).abs());
                    }
                }
                worst = worst.max(chain.normalization_error());
                count += 1;
            }
        }
    }
    (worst, count)
}

/// Largest deviation between the `gamma = eta = 0` posterior and the prior for all four agents.
fn zero_tuning_check() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let mdp = TabularMdp::random(3, 2, 2, &mut rng);
    let env = Environment::Mdp(mdp.clone());
    let prior: Vec<f64> = random_simplex(5, &mut rng).iter().map(|p| 0.5 * p + 0.1).collect();
    let base = make_perturbation_class(&Model::Mdp(mdp.clone()), 5, 0.3, &mut rng)?;
    let class = HypothesisClass::new(base.hypotheses, prior.clone(), 0)?;
    let mut tl = LossLedger::new(2);
    let mut jl = LossLedger::new(2);
    for e in 0..10 {
        for h in 0..2 {
            let tau = sample_episode(&env, &class.hypotheses[0].policy, &mut rng)?;
            tl.push(TransitionSample::from_trajectory(&tau, e, h, 0));
            jl.push(TrajectorySample {
                episode: e,
                step: h,
                explorer: 0,
                trajectory: tau,
            });
        }
    }
    let dev = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut worst = dev(&model_based_posterior_update(&tl, &class, 0.0, 0.0)?.probabilities(), &prior);
    worst = worst.max(dev(&psr_posterior_update(&jl, &class, 0.0, 0.0)?.probabilities(), &prior));
    let vclass = make_value_class(&mdp, 3, 0.2, &mut rng)?;
    for (idx, p) in model_free_posterior_update(&tl, &vclass, 0.0, 0.0)?.joint_enumeration(100)? {
        worst = worst.max((p - vclass.prior_of(&idx)).abs());
    }
    let pomdp = TabularPomdp::random(2, 2, 2, 2, &mut rng);
    let pclass = make_pobilinear_class(&pomdp, 1, 3, 1 << 20, &mut rng)?;
    let mut bl = LossLedger::new(2);
    for h in 0..2 {
        let trajectories = (0..4)
            .map(|_| sample_episode(&pomdp, &pclass.hypotheses[0].policy, &mut rng))
            .collect::<geclab::Result<Vec<_>>>()?;
        bl.push(BatchSample {
            episode: 0,
            step: h,
            explorer: 0,
            trajectories,
        });
    }
    worst = worst.max(dev(&pobilinear_posterior_update(&bl, &pclass, 0.0, 0.0, 4)?.probabilities(), &pclass.prior));
    Ok(worst)
}

fn all_markov_policies(h: usize, s: usize, a: usize) -> Vec<Vec<Vec<usize>>> {
    let slots = h * s;
    (0..a.pow(slots as u32))
        .map(|mut idx| {
            let mut p = vec![vec![0; s]; h];
            for slot in 0..slots {
                p[slot / s][slot % s] = idx % a;
                idx /= a;
            }
            p
        })
        .collect()
}

fn criterion9() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let policies = all_markov_policies(3, 3, 2);
    let mut worst_vi: f64 = 0.0;
    for _ in 0..50 {
        let mdp = TabularMdp::random(3, 2, 3, &mut rng);
        let best = policies.iter().map(|p| evaluate_markov_mdp(&mdp, p)).fold(f64::NEG_INFINITY, f64::max);
        worst_vi = worst_vi.max((plan_mdp(&mdp).value - best).abs());
    }
    let mut worst_tree: f64 = 0.0;
    for i in 0..20 {
        let mdp = TabularMdp::random(2 + i % 3, 2, 3, &mut rng);
        let p = TabularPomdp::from_mdp(&mdp);
        let v = plan_history_tree(&p, HISTORY_NODE_CAP).map_or(f64::INFINITY, |(v, _)| v);
        worst_tree = worst_tree.max((v - plan_mdp(&mdp).value).abs());
    }
    (
        worst_vi <= PLAN_TOL && worst_tree <= TREE_TOL,
        format!(
            "50 MDPs vs {} Markov policies: max error {worst_vi:.2e} (tol {PLAN_TOL:e}); 20 identity-emission POMDPs, history tree vs value iteration: max error {worst_tree:.2e} (tol {TREE_TOL:e})",
            policies.len()
        ),
    )
}

/// Batch-mean loss of the true `(pi*, g^{pi*})` at `N_batch = 10^4`, per step, against 3 sigma.
fn link_centring_check() -> Result<(bool, String)> {
    let exp = pobilinear_experiment()?;
    let LoadedClass::PoBilinear(class) = &exp.class else { unreachable!() };
    let Environment::Pomdp(pomdp) = &exp.env else { unreachable!() };
    let f = &class.hypotheses[class.truth];
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut ok = true;
    let mut parts = Vec::new();
    for h in 0..pomdp.horizon {
        let explore = compose_exploration(&f.policy, pomdp.actions, ExplorationKind::VType, h, &[])?;
        let batch = (0..n).map(|_| sample_episode(pomdp, &explore, &mut rng)).collect::<geclab::Result<Vec<_>>>()?;
        let mean = pobilinear_batch_mean(f, &batch, h, n)?;
        let var = batch.iter().map(|t| (pobilinear_loss(f, t, h) - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sigma = (var / n as f64).sqrt();
        ok &= mean.abs() <= 3.0 * sigma;
        parts.push(format!("step {h}: |mean| {:.2e} <= 3 sigma {:.2e}", mean.abs(), 3.0 * sigma));
    }
    Ok((ok, format!("link batch mean at N=10^4 ({})", parts.join(", "))))
}
