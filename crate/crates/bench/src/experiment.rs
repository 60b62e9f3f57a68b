//! Seed fans over one agent configuration, with CSV and JSON artifacts.

use crate::config::ExperimentConfig;
use anyhow::{anyhow, bail, Context, Result};
use geclab::agents::tuning::{
    default_epsilon, eluder_gec_bound, witness_gec_bound, psr_gec_bound, pobilinear_schedule, prescribed_gamma, PsrBoundInputs,
    PRESCRIBED_ETA,
};
use geclab::agents::{run_gps_idm, AgentConfig, AgentKind, RegretRecord, RunOutput, REGRET_COLUMNS};
use geclab::complexity::{gec_certificate, BurnIn, GecCertificate};
use geclab::decision::{Environment, ExplorationKind, ObservableModel};
use geclab::hypothesis::{make_pobilinear_class, make_perturbation_class, make_value_class, HypothesisClass, Model, ModelHypothesis};
use geclab::io::{load_class, load_environment, write_json, LoadedClass};
use geclab::psr::{check_generalized_regular, psr_from_weakly_revealing_pomdp, psr_rank_and_delta, OperatorPsr};
use geclab::rng::SeededSampler;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Node and column caps used by the PSR certificates behind the default tuning.
const CERT_NODE_CAP: usize = 1_000_000;
const CERT_COLUMN_CAP: usize = 100_000;
const POLICY_ENUM_CAP: usize = 1 << 20;

/// Optional overrides of the prescribed tuning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub n_batch: Option<usize>,
    pub d_gec: Option<f64>,
    pub exploration: Option<ExplorationKind>,
    pub track_gec: bool,
}

/// Resolved tuning of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub agent_kind: AgentKind,
    /// Episode budget requested in the config.
    pub budget: usize,
    /// Posterior updates actually performed.
    pub posterior_updates: usize,
    pub gamma: f64,
    pub eta: f64,
    pub n_batch: usize,
    /// Complexity bound plugged into the prescribed tuning.
    pub d_gec: f64,
    pub d_gec_source: String,
    pub burn_in: Option<BurnIn>,
}

/// Everything a seed run needs.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub env: Environment,
    pub class: LoadedClass,
    pub tuning: Tuning,
    pub agent: AgentConfig,
}

fn class_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Perturbation class of the environment converted to `m`-step revealing PSRs.
pub fn psr_perturbation_class<R: Rng + ?Sized>(env: &Environment, count: usize, eps: f64, m: usize, rng: &mut R) -> Result<LoadedClass> {
    let base = make_perturbation_class(&Model::Pomdp(env.to_pomdp()), count, eps, rng)?;
    let hyps = base
        .hypotheses
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let Model::Pomdp(p) = &h.model else { unreachable!("perturbation of a POMDP") };
            let psr = psr_from_weakly_revealing_pomdp(p, m).with_context(|| format!("hypothesis {i}"))?;
            Ok(ModelHypothesis::new(Model::Psr(psr))?)
        })
        .collect::<Result<Vec<_>>>()?;
    let core = match &hyps[0].model {
        Model::Psr(p) => p.core.clone(),
        _ => unreachable!(),
    };
    Ok(LoadedClass::Models {
        class: HypothesisClass::uniform(hyps, 0)?,
        core: Some(core),
    })
}

/// The class named by the config, or a generated one.
pub fn build_class(cfg: &ExperimentConfig, env: &Environment) -> Result<LoadedClass> {
    if let Some(path) = &cfg.class_file {
        return Ok(load_class(path, env)?);
    }
    let kind = cfg.agent_kind.unwrap_or(match env {
        Environment::Mdp(_) => AgentKind::ModelBased,
        Environment::Pomdp(_) => AgentKind::Psr,
    });
    let (n, eps, seed) = (cfg.class_size, cfg.class_eps, cfg.class_seed);
    Ok(match kind {
        AgentKind::ModelBased => LoadedClass::Models {
            class: make_perturbation_class(&Model::from(env.clone()), n, eps, &mut class_rng(seed))?,
            core: None,
        },
        AgentKind::Psr => psr_perturbation_class(env, n, eps, cfg.psr_revealing_steps, &mut class_rng(seed))?,
        AgentKind::ModelFree => {
            let Environment::Mdp(mdp) = env else { bail!("the model-free agent needs an MDP environment") };
            LoadedClass::Values(make_value_class(mdp, n, eps, &mut class_rng(seed))?)
        }
        AgentKind::PoBilinear => {
            let p = env.to_pomdp();
            LoadedClass::PoBilinear(make_pobilinear_class(&p, cfg.memory, cfg.n_policies, POLICY_ENUM_CAP, &mut class_rng(seed))?)
        }
    })
}

/// `d_PSR A^3 U_A^4 H iota / alpha^4` for the true PSR, with certified constants.
pub fn psr_bound(truth: &OperatorPsr, env: &Environment, episodes: usize) -> Result<(f64, String)> {
    let g = check_generalized_regular(truth, CERT_NODE_CAP)?;
    let latent = env.to_pomdp();
    let cert = psr_rank_and_delta(truth, Some(&latent), CERT_COLUMN_CAP).or_else(|_| psr_rank_and_delta(truth, None, CERT_COLUMN_CAP))?;
    let inputs = PsrBoundInputs {
        d_psr: cert.d_psr as f64,
        n_actions: truth.n_actions,
        u_a: truth.core.u_a(),
        horizon: truth.horizon(),
        alpha: g.alpha,
        delta: cert.delta_bound,
        episodes,
    };
    let source = format!(
        "psr bound (d_psr = {}, alpha = {:.6}, delta = {:.6}, U_A = {})",
        cert.d_psr, g.alpha, cert.delta_bound, inputs.u_a
    );
    Ok((psr_gec_bound(&inputs), source))
}

impl Experiment {
    pub fn new(env: Environment, class: LoadedClass, kind: Option<AgentKind>, budget: usize, ov: &Overrides) -> Result<Self> {
        let kind = kind.unwrap_or_else(|| class.default_kind());
        class.agent_class(kind)?;
        if budget == 0 {
            bail!("T must be at least 1");
        }
        let (h_, o_, a_) = (env.horizon(), env.num_obs(), env.num_actions());
        let eps = default_epsilon(h_, budget);
        let d_q = (o_ * a_) as f64;
        let mut n_batch = 1;
        let mut updates = budget;
        let (d_gec, source, gamma, eta, burn_in) = match (&class, kind) {
            (LoadedClass::Models { class, .. }, AgentKind::ModelBased) => {
                let (d, src) = match ov.d_gec {
                    Some(d) => (d, "config".to_string()),
                    None => (witness_gec_bound(d_q, h_, budget, eps, 1.0), format!("witness-rank bound (d_Q = {d_q}, kappa = 1)")),
                };
                (d, src, prescribed_gamma(class.len(), budget, d), PRESCRIBED_ETA, Some(BurnIn::Linear { factor: 2.0, eps }))
            }
            (LoadedClass::Models { class, .. }, AgentKind::Psr) => {
                let (d, src) = match ov.d_gec {
                    Some(d) => (d, "config".to_string()),
                    None => {
                        let Model::Psr(truth) = &class.hypotheses[class.truth].model else {
                            bail!("PSR classes must hold PSR models");
                        };
                        psr_bound(truth, &env, budget).context("certifying the true PSR (set d_gec to skip)")?
                    }
                };
                (d, src, prescribed_gamma(class.len(), budget, d), PRESCRIBED_ETA, Some(BurnIn::SqrtDht))
            }
            (LoadedClass::Values(c), AgentKind::ModelFree) => {
                let (d, src) = match ov.d_gec {
                    Some(d) => (d, "config".to_string()),
                    None => (eluder_gec_bound(d_q, h_, budget), format!("Bellman eluder bound (d_Q = {d_q})")),
                };
                let size: usize = c.layer_sizes().iter().product();
                (d, src, prescribed_gamma(size, budget, d), PRESCRIBED_ETA, Some(BurnIn::Generic { eps }))
            }
            (LoadedClass::PoBilinear(c), AgentKind::PoBilinear) => {
                let (d, src) = match ov.d_gec {
                    Some(d) => (d, "config".to_string()),
                    None => (env.to_pomdp().states as f64, "latent state count".to_string()),
                };
                let s = pobilinear_schedule(budget, a_, h_, d, c.len());
                n_batch = ov.n_batch.unwrap_or(s.n_batch);
                updates = ((budget as f64) / (n_batch * h_) as f64).round().max(1.0) as usize;
                (d, src, s.gamma, s.eta, None)
            }
            _ => unreachable!("checked by agent_class"),
        };
        let gamma = ov.gamma.unwrap_or(gamma);
        let eta = ov.eta.unwrap_or(eta);
        let agent = AgentConfig {
            episodes: updates,
            gamma,
            eta,
            n_batch,
            exploration: ov.exploration.unwrap_or(ExplorationKind::QType),
            track_gec: ov.track_gec && burn_in.is_some(),
            ..AgentConfig::default()
        };
        Ok(Self {
            tuning: Tuning {
                agent_kind: kind,
                budget,
                posterior_updates: updates,
                gamma,
                eta,
                n_batch,
                d_gec,
                d_gec_source: source,
                burn_in,
            },
            env,
            class,
            agent,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let env = load_environment(&cfg.env_file)?;
        let class = build_class(cfg, &env)?;
        let ov = Overrides {
            gamma: cfg.gamma,
            eta: cfg.eta,
            n_batch: cfg.n_batch,
            d_gec: cfg.d_gec,
            exploration: cfg.exploration,
            track_gec: cfg.track_gec,
        };
        Self::new(env, class, cfg.agent_kind, cfg.episodes, &ov)
    }

    pub fn with_agent(&self, f: impl FnOnce(&mut AgentConfig)) -> Self {
        let mut e = self.clone();
        f(&mut e.agent);
        e.tuning.gamma = e.agent.gamma;
        e.tuning.eta = e.agent.eta;
        e
    }

    pub fn run_seed(&self, seed: u64) -> Result<RunOutput> {
        let class = self.class.agent_class(self.tuning.agent_kind)?;
        run_gps_idm(&self.env, class, &self.agent, &SeededSampler::new(seed, 0)).map_err(|e| anyhow!("seed {seed}: {e}"))
    }

    pub fn certificate(&self, out: &RunOutput) -> Option<GecCertificate> {
        Some(gec_certificate(out.trace.as_ref()?, self.tuning.burn_in?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: usize,
    pub regret_cum: f64,
    pub mass_on_truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub episodes: usize,
    pub final_regret: f64,
    pub checkpoints: Vec<Checkpoint>,
    /// Posterior mass on the truth at every tenth of the run.
    pub mass_on_truth: Vec<f64>,
    pub max_normalization_error: f64,
    pub certificate: Option<GecCertificate>,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len().max(1) as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCheckpoint {
    pub t: usize,
    pub regret_cum: Stat,
    pub regret_per_episode: Stat,
    pub mass_on_truth: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tuning: Tuning,
    pub class_size: usize,
    pub seeds: Vec<SeedSummary>,
    pub final_regret: Stat,
    pub checkpoints: Vec<AggregateCheckpoint>,
    pub d_hat: Option<Stat>,
}

/// Episode numbers `T/10`, `T/2`, `T` (at least 1).
pub fn checkpoint_times(n: usize) -> Vec<usize> {
    let mut ts = vec![(n / 10).max(1), (n / 2).max(1), n];
    ts.dedup();
    ts
}

pub fn summarize_seed(seed: u64, out: &RunOutput, certificate: Option<GecCertificate>) -> SeedSummary {
    let n = out.records.len();
    let at = |t: usize| &out.records[t - 1];
    SeedSummary {
        seed,
        episodes: n,
        final_regret: out.records.last().map_or(0.0, |r| r.regret_cum),
        checkpoints: checkpoint_times(n)
            .into_iter()
            .map(|t| Checkpoint {
                t,
                regret_cum: at(t).regret_cum,
                mass_on_truth: at(t).mass_on_truth,
            })
            .collect(),
        mass_on_truth: (1..=10).map(|k| at((k * n / 10).max(1)).mass_on_truth).collect(),
        max_normalization_error: out.diagnostics.max_normalization_error,
        certificate,
    }
}

pub fn aggregate(tuning: Tuning, class_size: usize, seeds: Vec<SeedSummary>) -> RunSummary {
    let finals: Vec<f64> = seeds.iter().map(|s| s.final_regret).collect();
    let checkpoints = match seeds.first() {
        Some(first) => (0..first.checkpoints.len())
            .map(|k| {
                let t = first.checkpoints[k].t;
                let reg: Vec<f64> = seeds.iter().map(|s| s.checkpoints[k].regret_cum).collect();
                let per: Vec<f64> = reg.iter().map(|r| r / t as f64).collect();
                let mass: Vec<f64> = seeds.iter().map(|s| s.checkpoints[k].mass_on_truth).collect();
                AggregateCheckpoint {
                    t,
                    regret_cum: Stat::of(&reg),
                    regret_per_episode: Stat::of(&per),
                    mass_on_truth: Stat::of(&mass),
                }
            })
            .collect(),
        None => Vec::new(),
    };
    let d_hats: Option<Vec<f64>> = seeds.iter().map(|s| s.certificate.as_ref().map(|c| c.d_hat)).collect();
    RunSummary {
        tuning,
        class_size,
        final_regret: Stat::of(&finals),
        checkpoints,
        d_hat: d_hats.map(|d| Stat::of(&d)),
        seeds,
    }
}

pub fn write_regret_csv(path: &Path, records: &[RegretRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(REGRET_COLUMNS)?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.hypothesis_index.to_string(),
            r.v_pred.to_string(),
            r.v_realized.to_string(),
            r.regret_step.to_string(),
            r.regret_cum.to_string(),
            r.mass_on_truth.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run every seed (in parallel on `threads` workers), write `regret_seed_<s>.csv`
/// (and `trace_seed_<s>.json` when tracking) per seed, then `summary.json`.
pub fn run_experiment(exp: &Experiment, seeds: &[u64], out_dir: &Path, threads: Option<usize>) -> Result<RunSummary> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build()?;
    let per_seed: Vec<Result<SeedSummary>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let out = exp.run_seed(seed)?;
                write_regret_csv(&out_dir.join(format!("regret_seed_{seed}.csv")), &out.records)?;
                if let Some(trace) = &out.trace {
                    write_json(&out_dir.join(format!("trace_seed_{seed}.json")), trace)?;
                }
                Ok(summarize_seed(seed, &out, exp.certificate(&out)))
            })
            .collect()
    });
    let seeds = per_seed.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = aggregate(exp.tuning.clone(), exp.class.len(), seeds);
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}
