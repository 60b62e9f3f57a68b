use super::ledger::{
    pobilinear_batch_mean, trajectory_log_likelihood, transition_log_likelihood, BatchSample, LossLedger, TrajectorySample,
    TransitionSample, ValueLosses,
};
use super::posterior::{tuple_index, JointPosterior};
use crate::complexity::{DiscrepancyKind, GecTrace};
use crate::decision::{
    compose_exploration, enumerate_trajectories, evaluate_policy, sample_episode, sample_index, Environment, ExplorationKind,
    HistoryPolicy, ObservableModel, TabularMdp,
};
use crate::divergence::hellinger_squared;
use crate::error::{GecError, Result};
use crate::hypothesis::{
    best_memory_policy, evaluate_markov_mdp, plan_history_tree, plan_mdp, HypothesisClass, LayeredValueClass, Model,
    ModelHypothesis, PoBilinearHypothesis, HISTORY_NODE_CAP,
};
use crate::psr::CoreTestSet;
use crate::rng::SeededSampler;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

/// Offset separating the posterior-draw stream from the episode stream.
const DRAW_STREAM_OFFSET: u64 = 1 << 62;
/// Tolerance on negative regret caused by rounding.
const REGRET_TOL: f64 = 1e-9;
const POLICY_ENUM_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    ModelFree,
    ModelBased,
    Psr,
    PoBilinear,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [Self::ModelFree, Self::ModelBased, Self::Psr, Self::PoBilinear];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ModelFree => "model-free",
            Self::ModelBased => "model-based",
            Self::Psr => "psr",
            Self::PoBilinear => "po-bilinear",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = GecError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| GecError::Config(format!("unknown agent kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Number of posterior updates `T`.
    pub episodes: usize,
    pub gamma: f64,
    pub eta: f64,
    /// Trajectories per step and update (PO-bilinear only).
    pub n_batch: usize,
    /// Exploration for the model-based agent (q-type or v-type).
    pub exploration: ExplorationKind,
    /// Record the prediction and training errors of every episode.
    pub track_gec: bool,
    /// Largest trajectory set enumerated for exact expectations.
    pub trajectory_cap: usize,
    /// Optimal value; computed by the matching planner when absent.
    pub v_star: Option<f64>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            gamma: 0.0,
            eta: 0.5,
            n_batch: 1,
            exploration: ExplorationKind::QType,
            track_gec: false,
            trajectory_cap: 100_000,
            v_star: None,
        }
    }
}

/// The hypothesis class handed to an agent; the variant selects the agent.
#[derive(Debug, Clone, Copy)]
pub enum AgentClass<'a> {
    ModelFree(&'a LayeredValueClass),
    ModelBased(&'a HypothesisClass<ModelHypothesis>),
    Psr {
        class: &'a HypothesisClass<ModelHypothesis>,
        core: &'a CoreTestSet,
    },
    PoBilinear(&'a HypothesisClass<PoBilinearHypothesis>),
}

impl AgentClass<'_> {
    pub fn kind(&self) -> AgentKind {
        match self {
            Self::ModelFree(_) => AgentKind::ModelFree,
            Self::ModelBased(_) => AgentKind::ModelBased,
            Self::Psr { .. } => AgentKind::Psr,
            Self::PoBilinear(_) => AgentKind::PoBilinear,
        }
    }
}

/// One executed episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    /// 1-based episode number.
    pub t: usize,
    pub hypothesis_index: usize,
    #[serde(rename = "V_pred")]
    pub v_pred: f64,
    #[serde(rename = "V_realized")]
    pub v_realized: f64,
    pub regret_step: f64,
    pub regret_cum: f64,
    pub mass_on_truth: f64,
}

pub const REGRET_COLUMNS: [&str; 7] = ["t", "hypothesis_index", "V_pred", "V_realized", "regret_step", "regret_cum", "mass_on_truth"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub v_star: f64,
    /// Largest `|sum_f p^t(f) - 1|` seen during the run.
    pub max_normalization_error: f64,
    /// Hypotheses with zero posterior weight at the end of the run.
    pub eliminated: Vec<usize>,
    pub ledger_len: usize,
    pub posterior_updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<RegretRecord>,
    pub trace: Option<GecTrace>,
    pub diagnostics: Diagnostics,
}

struct RegretBook {
    v_star: f64,
    cum: f64,
    records: Vec<RegretRecord>,
}

impl RegretBook {
    fn new(v_star: f64) -> Self {
        Self {
            v_star,
            cum: 0.0,
            records: Vec::new(),
        }
    }

    fn push(&mut self, hypothesis_index: usize, v_pred: f64, v_realized: f64, mass_on_truth: f64) -> Result<()> {
        let mut r = self.v_star - v_realized;
        if !(-REGRET_TOL..=1.0 + REGRET_TOL).contains(&r) {
            return Err(GecError::Constraint(format!(
                "episode {}: regret {r} outside [0, 1] (V* = {}, realized {v_realized})",
                self.records.len() + 1,
                self.v_star
            )));
        }
        r = r.clamp(0.0, 1.0);
        self.cum += r;
        self.records.push(RegretRecord {
            t: self.records.len() + 1,
            hypothesis_index,
            v_pred,
            v_realized,
            regret_step: r,
            regret_cum: self.cum,
            mass_on_truth,
        });
        Ok(())
    }
}

struct TraceBook {
    kind: DiscrepancyKind,
    pred: Vec<f64>,
    train: Vec<f64>,
}

impl TraceBook {
    fn new(kind: DiscrepancyKind) -> Self {
        Self {
            kind,
            pred: Vec::new(),
            train: Vec::new(),
        }
    }

    fn finish(self, horizon: usize) -> GecTrace {
        GecTrace {
            horizon,
            discrepancy: self.kind,
            prediction_errors: self.pred,
            training_errors: self.train,
            mc_tolerance: None,
        }
    }
}

/// Run the optimistic posterior-sampling loop for `cfg.episodes` posterior updates.
pub fn run_gps_idm(env: &Environment, class: AgentClass<'_>, cfg: &AgentConfig, sampler: &SeededSampler) -> Result<RunOutput> {
    if cfg.episodes == 0 {
        return Err(GecError::Config("at least one episode is required".into()));
    }
    match class {
        AgentClass::ModelFree(c) => run_model_free(env, c, cfg, sampler),
        AgentClass::ModelBased(c) => run_model_based(env, c, cfg, sampler),
        AgentClass::Psr { class, core } => run_psr(env, class, core, cfg, sampler),
        AgentClass::PoBilinear(c) => run_pobilinear(env, c, cfg, sampler),
    }
}

fn draw_sampler(sampler: &SeededSampler) -> SeededSampler {
    sampler.substream(sampler.stream.wrapping_add(DRAW_STREAM_OFFSET))
}

fn require_mdp(env: &Environment) -> Result<&TabularMdp> {
    match env {
        Environment::Mdp(m) => Ok(m),
        Environment::Pomdp(_) => Err(GecError::Config("this agent needs an MDP environment".into())),
    }
}

fn check_shape(model: &dyn ObservableModel, env: &dyn ObservableModel, what: &str) -> Result<()> {
    if model.horizon() != env.horizon() || model.num_obs() != env.num_obs() || model.num_actions() != env.num_actions() {
        return Err(GecError::Config(format!("{what} does not match the environment's dimensions")));
    }
    Ok(())
}

fn episode_seed(t: usize, horizon: usize, h: usize) -> u64 {
    (t * horizon + h) as u64
}

/// `occ[h][x][a]`: probability of `(x_h, a_h) = (x, a)` under `policy`.
fn step_occupancy(mdp: &TabularMdp, policy: &HistoryPolicy, step: usize, cap: usize) -> Result<Vec<Vec<f64>>> {
    let mut occ = vec![vec![0.0; mdp.actions]; mdp.states];
    for w in enumerate_trajectories(mdp, policy, cap)? {
        let tau = &w.trajectory;
        occ[tau.observations[step]][tau.actions[step]] += w.probability;
    }
    Ok(occ)
}

fn run_model_free(env: &Environment, class: &LayeredValueClass, cfg: &AgentConfig, sampler: &SeededSampler) -> Result<RunOutput> {
    let mdp = require_mdp(env)?;
    let horizon = mdp.horizon;
    if class.horizon() != horizon
        || class.layers.iter().flatten().any(|q| q.len() != mdp.states || q.iter().any(|r| r.len() != mdp.actions))
    {
        return Err(GecError::Config("value class does not match the environment's dimensions".into()));
    }
    let sizes = class.layer_sizes();
    let v_star = cfg.v_star.unwrap_or_else(|| plan_mdp(mdp).value);
    let draws = draw_sampler(sampler);
    let mut losses = ValueLosses::new(class);
    let mut ledger = LossLedger::new(horizon);
    let mut book = RegretBook::new(v_star);
    let mut realized: HashMap<usize, f64> = HashMap::new();
    let mut trace = cfg.track_gec.then(|| TraceBook::new(DiscrepancyKind::SquaredBellman));
    let mut acc_occ = vec![vec![vec![0.0; mdp.actions]; mdp.states]; horizon];
    let mut max_norm_err: f64 = 0.0;

    for t in 0..cfg.episodes {
        let post = losses.posterior(class, cfg.gamma, cfg.eta)?;
        max_norm_err = max_norm_err.max(post.normalization_error());
        let idx = post.sample(&mut draws.episode_rng(t as u64));
        let k = tuple_index(&idx, &sizes);
        let mass = post.probability(&class.truth);
        let hyp = class.hypothesis(&idx);
        let greedy: Vec<Vec<usize>> = (0..horizon).map(|h| (0..mdp.states).map(|x| hyp.greedy(h, x)).collect()).collect();
        let v_real = *realized.entry(k).or_insert_with(|| evaluate_markov_mdp(mdp, &greedy));
        let v_pred = class.value_of_first(idx[0]);

        if let Some(tb) = trace.as_mut() {
            let mut train = 0.0;
            for h in 0..horizon {
                for x in 0..mdp.states {
                    for a in 0..mdp.actions {
                        let w = acc_occ[h][x][a];
                        if w == 0.0 {
                            continue;
                        }
                        let mut e = hyp.q[h][x][a] - mdp.rewards[h][x][a];
                        if h + 1 < horizon {
                            e -= mdp.transitions[h][x][a].iter().enumerate().map(|(y, p)| p * hyp.v(h + 1, y)).sum::<f64>();
                        }
                        train += w * e * e;
                    }
                }
            }
            tb.pred.push(v_pred - v_real);
            tb.train.push(train);
            let mut d = mdp.initial.clone();
            for h in 0..horizon {
                let mut next = vec![0.0; mdp.states];
                for x in 0..mdp.states {
                    let a = greedy[h][x];
                    acc_occ[h][x][a] += d[x];
                    if h + 1 < horizon {
                        for (y, p) in mdp.transitions[h][x][a].iter().enumerate() {
                            next[y] += d[x] * p;
                        }
                    }
                }
                d = next;
            }
        }

        let policy = hyp.policy();
        for h in 0..horizon {
            let tau = sample_episode(mdp, &policy, &mut sampler.episode_rng(episode_seed(t, horizon, h)))?;
            let z = TransitionSample::from_trajectory(&tau, t, h, k);
            losses.add(class, &z);
            ledger.push(z);
        }
        book.push(k, v_pred, v_real, mass)?;
    }
    Ok(RunOutput {
        records: book.records,
        trace: trace.map(|tb| tb.finish(horizon)),
        diagnostics: Diagnostics {
            v_star,
            max_normalization_error: max_norm_err,
            eliminated: Vec::new(),
            ledger_len: ledger.len(),
            posterior_updates: cfg.episodes,
        },
    })
}

fn run_model_based(
    env: &Environment,
    class: &HypothesisClass<ModelHypothesis>,
    cfg: &AgentConfig,
    sampler: &SeededSampler,
) -> Result<RunOutput> {
    let mdp = require_mdp(env)?;
    let horizon = mdp.horizon;
    if cfg.exploration == ExplorationKind::PsrType {
        return Err(GecError::Config("the model-based agent explores with q-type or v-type policies".into()));
    }
    let models: Vec<&TabularMdp> = class
        .hypotheses
        .iter()
        .map(|h| match &h.model {
            Model::Mdp(m) => check_shape(m, mdp, "hypothesis").map(|_| m),
            _ => Err(GecError::Config("the model-based agent needs MDP hypotheses".into())),
        })
        .collect::<Result<_>>()?;
    let explore: Vec<Vec<HistoryPolicy>> = class
        .hypotheses
        .iter()
        .map(|h| (0..horizon).map(|k| compose_exploration(&h.policy, mdp.actions, cfg.exploration, k, &[])).collect())
        .collect::<Result<_>>()?;
    let values: Vec<f64> = class.hypotheses.iter().map(|h| h.value).collect();
    let v_star = cfg.v_star.unwrap_or_else(|| plan_mdp(mdp).value);
    let draws = draw_sampler(sampler);
    let mut scores = vec![0.0; class.len()];
    let mut ledger = LossLedger::new(horizon);
    let mut book = RegretBook::new(v_star);
    let mut realized: Vec<Option<f64>> = vec![None; class.len()];
    let mut trace = cfg.track_gec.then(|| TraceBook::new(DiscrepancyKind::TransitionHellinger));
    let mut occ_cache: Vec<Option<Vec<Vec<Vec<f64>>>>> = vec![None; class.len()];
    let mut acc_occ = vec![vec![vec![0.0; mdp.actions]; mdp.states]; horizon];
    let hellinger: Vec<Vec<Vec<Vec<f64>>>> = if cfg.track_gec {
        models
            .iter()
            .map(|m| {
                (0..horizon.saturating_sub(1))
                    .map(|h| {
                        (0..mdp.states)
                            .map(|x| {
                                (0..mdp.actions)
                                    .map(|a| hellinger_squared(&m.transitions[h][x][a], &mdp.transitions[h][x][a]))
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut max_norm_err: f64 = 0.0;
    let mut post = JointPosterior::new(&class.prior, &values, cfg.gamma, cfg.eta, &scores);

    for t in 0..cfg.episodes {
        post = JointPosterior::new(&class.prior, &values, cfg.gamma, cfg.eta, &scores);
        let probs = post.probabilities();
        max_norm_err = max_norm_err.max((probs.iter().sum::<f64>() - 1.0).abs());
        let f = sample_index(&probs, &mut draws.episode_rng(t as u64));
        let v_real = match realized[f] {
            Some(v) => v,
            None => {
                let v = evaluate_policy(mdp, &class.hypotheses[f].policy)?;
                realized[f] = Some(v);
                v
            }
        };

        if let Some(tb) = trace.as_mut() {
            let mut train = 0.0;
            for (h, layer) in hellinger[f].iter().enumerate() {
                for (x, row) in layer.iter().enumerate() {
                    train += row.iter().zip(&acc_occ[h][x]).map(|(d, w)| d * w).sum::<f64>();
                }
            }
            tb.pred.push(values[f] - v_real);
            tb.train.push(train);
            if occ_cache[f].is_none() {
                let occ = (0..horizon)
                    .map(|h| step_occupancy(mdp, &explore[f][h], h, cfg.trajectory_cap))
                    .collect::<Result<Vec<_>>>()?;
                occ_cache[f] = Some(occ);
            }
            for (acc, occ) in acc_occ.iter_mut().zip(occ_cache[f].as_ref().expect("filled above")) {
                for (ar, or) in acc.iter_mut().zip(occ) {
                    ar.iter_mut().zip(or).for_each(|(a, o)| *a += o);
                }
            }
        }

        for h in 0..horizon {
            let tau = sample_episode(mdp, &explore[f][h], &mut sampler.episode_rng(episode_seed(t, horizon, h)))?;
            let z = TransitionSample::from_trajectory(&tau, t, h, f);
            for (s, hyp) in scores.iter_mut().zip(&class.hypotheses) {
                *s += transition_log_likelihood(&hyp.model, &z)?;
            }
            ledger.push(z);
        }
        book.push(f, values[f], v_real, probs[class.truth])?;
    }
    Ok(RunOutput {
        records: book.records,
        trace: trace.map(|tb| tb.finish(horizon)),
        diagnostics: Diagnostics {
            v_star,
            max_normalization_error: max_norm_err,
            eliminated: post.eliminated(),
            ledger_len: ledger.len(),
            posterior_updates: cfg.episodes,
        },
    })
}

/// Every `(observations, actions)` sequence of length `H`, with the dummy appended.
fn all_sequences(horizon: usize, n_obs: usize, n_actions: usize, cap: usize) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let total = ((n_obs * n_actions) as f64).powi(horizon as i32);
    if total > cap as f64 {
        return Err(GecError::TooLarge(format!("{total} trajectories exceed the cap {cap}")));
    }
    let mut out = Vec::with_capacity(total as usize);
    for mut k in 0..total as usize {
        let mut obs = vec![0; horizon + 1];
        let mut acts = vec![0; horizon];
        for h in (0..horizon).rev() {
            acts[h] = k % n_actions;
            k /= n_actions;
            obs[h] = k % n_obs;
            k /= n_obs;
        }
        obs[horizon] = n_obs;
        out.push((obs, acts));
    }
    Ok(out)
}

fn run_psr(
    env: &Environment,
    class: &HypothesisClass<ModelHypothesis>,
    core: &CoreTestSet,
    cfg: &AgentConfig,
    sampler: &SeededSampler,
) -> Result<RunOutput> {
    let horizon = env.horizon();
    let (n_obs, n_actions) = (env.num_obs(), env.num_actions());
    if core.horizon() != horizon {
        return Err(GecError::Config("core test set horizon does not match the environment".into()));
    }
    for h in &class.hypotheses {
        check_shape(&h.model, env, "hypothesis")?;
    }
    let explore: Vec<Vec<HistoryPolicy>> = class
        .hypotheses
        .iter()
        .map(|hyp| {
            (0..horizon)
                .map(|k| compose_exploration(&hyp.policy, n_actions, ExplorationKind::PsrType, k, &core.action_sequences(k)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = class.hypotheses.iter().map(|h| h.value).collect();
    let v_star = match cfg.v_star {
        Some(v) => v,
        None => plan_history_tree(env, HISTORY_NODE_CAP)?.0,
    };
    let draws = draw_sampler(sampler);
    let mut scores = vec![0.0; class.len()];
    let mut ledger = LossLedger::new(horizon);
    let mut book = RegretBook::new(v_star);
    let mut realized: Vec<Option<f64>> = vec![None; class.len()];
    let mut trace = cfg.track_gec.then(|| TraceBook::new(DiscrepancyKind::TrajectoryHellinger));

    let (sequences, dynamics, truth_dynamics) = if cfg.track_gec {
        let seqs = all_sequences(horizon, n_obs, n_actions, cfg.trajectory_cap)?;
        let dynamics: Vec<Vec<f64>> = class
            .hypotheses
            .iter()
            .map(|h| seqs.iter().map(|(o, a)| h.model.dynamics_probability(&o[..horizon], a)).collect())
            .collect();
        let truth: Vec<f64> = seqs.iter().map(|(o, a)| env.dynamics_probability(&o[..horizon], a)).collect();
        (seqs, dynamics, truth)
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    let mut row_cache: Vec<Option<Vec<f64>>> = vec![None; class.len()];
    let mut acc = vec![0.0; class.len()];
    let mut max_norm_err: f64 = 0.0;
    let mut post = JointPosterior::new(&class.prior, &values, cfg.gamma, cfg.eta, &scores);

    for t in 0..cfg.episodes {
        post = JointPosterior::new(&class.prior, &values, cfg.gamma, cfg.eta, &scores);
        let probs = post.probabilities();
        max_norm_err = max_norm_err.max((probs.iter().sum::<f64>() - 1.0).abs());
        let f = sample_index(&probs, &mut draws.episode_rng(t as u64));
        let v_real = match realized[f] {
            Some(v) => v,
            None => {
                let v = evaluate_policy(env, &class.hypotheses[f].policy)?;
                realized[f] = Some(v);
                v
            }
        };

        if let Some(tb) = trace.as_mut() {
            tb.pred.push(values[f] - v_real);
            tb.train.push(acc[f]);
            if row_cache[f].is_none() {
                let mut row = vec![0.0; class.len()];
                for policy in &explore[f] {
                    let pi: Vec<f64> = sequences.iter().map(|(o, a)| policy.sequence_probability(o, a, horizon)).collect();
                    let p_true: Vec<f64> = pi.iter().zip(&truth_dynamics).map(|(x, y)| x * y).collect();
                    for (r, dyn_g) in row.iter_mut().zip(&dynamics) {
                        let p_g: Vec<f64> = pi.iter().zip(dyn_g).map(|(x, y)| x * y).collect();
                        *r += hellinger_squared(&p_g, &p_true);
                    }
                }
                row_cache[f] = Some(row);
            }
            acc.iter_mut().zip(row_cache[f].as_ref().expect("filled above")).for_each(|(a, r)| *a += r);
        }

        for h in 0..horizon {
            let tau = sample_episode(env, &explore[f][h], &mut sampler.episode_rng(episode_seed(t, horizon, h)))?;
            for (s, hyp) in scores.iter_mut().zip(&class.hypotheses) {
                *s += trajectory_log_likelihood(&hyp.model, &tau);
            }
            ledger.push(TrajectorySample {
                episode: t,
                step: h,
                explorer: f,
                trajectory: tau,
            });
        }
        book.push(f, values[f], v_real, probs[class.truth])?;
    }
    Ok(RunOutput {
        records: book.records,
        trace: trace.map(|tb| tb.finish(horizon)),
        diagnostics: Diagnostics {
            v_star,
            max_normalization_error: max_norm_err,
            eliminated: post.eliminated(),
            ledger_len: ledger.len(),
            posterior_updates: cfg.episodes,
        },
    })
}

fn run_pobilinear(
    env: &Environment,
    class: &HypothesisClass<PoBilinearHypothesis>,
    cfg: &AgentConfig,
    sampler: &SeededSampler,
) -> Result<RunOutput> {
    let pomdp = env.to_pomdp();
    let horizon = pomdp.horizon;
    let memory = class.hypotheses[0].link.memory;
    if class.hypotheses.iter().any(|h| h.policy.horizon() != horizon || h.link.tables.len() != horizon) {
        return Err(GecError::Config("PO-bilinear hypotheses do not match the environment horizon".into()));
    }
    let n_batch = cfg.n_batch.max(1);
    let explore: Vec<Vec<HistoryPolicy>> = class
        .hypotheses
        .iter()
        .map(|hyp| (0..horizon).map(|k| compose_exploration(&hyp.policy, pomdp.actions, ExplorationKind::VType, k, &[])).collect())
        .collect::<Result<_>>()?;
    let values: Vec<f64> = class.hypotheses.iter().map(|h| h.value).collect();
    let v_star = match cfg.v_star {
        Some(v) => v,
        None => best_memory_policy(&pomdp, memory, POLICY_ENUM_CAP)?.0,
    };
    let draws = draw_sampler(sampler);
    let mut scores = vec![0.0; class.len()];
    let mut ledger = LossLedger::new(horizon);
    let mut book = RegretBook::new(v_star);
    let mut realized: Vec<Option<f64>> = vec![None; class.len()];
    let mut max_norm_err: f64 = 0.0;
    let mut episode = 0u64;
    let mut post = JointPosterior::new(&class.prior, &values, cfg.gamma, cfg.eta, &scores);

    for t in 0..cfg.episodes {
        post = JointPosterior::new(&class.prior, &values, cfg.gamma, cfg.eta, &scores);
        let probs = post.probabilities();
        max_norm_err = max_norm_err.max((probs.iter().sum::<f64>() - 1.0).abs());
        let f = sample_index(&probs, &mut draws.episode_rng(t as u64));
        let v_real = match realized[f] {
            Some(v) => v,
            None => {
                let v = evaluate_policy(&pomdp, &class.hypotheses[f].policy)?;
                realized[f] = Some(v);
                v
            }
        };
        for h in 0..horizon {
            let mut batch = Vec::with_capacity(n_batch);
            for _ in 0..n_batch {
                batch.push(sample_episode(&pomdp, &explore[f][h], &mut sampler.episode_rng(episode))?);
                episode += 1;
                book.push(f, values[f], v_real, probs[class.truth])?;
            }
            for (s, hyp) in scores.iter_mut().zip(&class.hypotheses) {
                let m = pobilinear_batch_mean(hyp, &batch, h, n_batch)?;
                *s -= m * m;
            }
            ledger.push(BatchSample {
                episode: t,
                step: h,
                explorer: f,
                trajectories: batch,
            });
        }
    }
    Ok(RunOutput {
        records: book.records,
        trace: None,
        diagnostics: Diagnostics {
            v_star,
            max_normalization_error: max_norm_err,
            eliminated: post.eliminated(),
            ledger_len: ledger.len(),
            posterior_updates: cfg.episodes,
        },
    })
}
