//! JSON file formats for environments, PSRs, hypothesis classes and GEC traces.
//!
//! Every loader validates what it reads; errors name the file and the offending entry.

use crate::agents::{AgentClass, AgentKind};
use crate::complexity::GecTrace;
use crate::decision::{memory_table_len, Environment, HistoryPolicy, ObservableModel, TabularPomdp};
use crate::error::{GecError, Result};
use crate::hypothesis::{
    policy_memory, HypothesisClass, LayeredValueClass, LinkFunction, Model, ModelHypothesis, PoBilinearHypothesis,
};
use crate::psr::{psr_from_weakly_revealing_pomdp, CoreTestSet, OperatorPsr};
use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

fn context(path: &Path, e: GecError) -> GecError {
    match e {
        GecError::Io(e) => GecError::Parse(format!("{}: {e}", path.display())),
        GecError::Parse(m) => GecError::Parse(format!("{}: {m}", path.display())),
        GecError::InvalidModel(m) => GecError::InvalidModel(format!("{}: {m}", path.display())),
        GecError::Config(m) => GecError::Config(format!("{}: {m}", path.display())),
        other => other,
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| context(path, e.into()))?;
    serde_json::from_str(&text).map_err(|e| GecError::Parse(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| GecError::Parse(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_environment(path: &Path) -> Result<Environment> {
    let env: Environment = read_json(path)?;
    env.validate().map_err(|e| context(path, e))?;
    Ok(env)
}

pub fn load_trace(path: &Path) -> Result<GecTrace> {
    let trace: GecTrace = read_json(path)?;
    validate_trace(&trace).map_err(|e| context(path, e))?;
    Ok(trace)
}

pub fn validate_trace(trace: &GecTrace) -> Result<()> {
    if trace.prediction_errors.len() != trace.training_errors.len() {
        return Err(GecError::InvalidModel(format!(
            "{} prediction errors but {} training errors",
            trace.prediction_errors.len(),
            trace.training_errors.len()
        )));
    }
    if let Some(t) = trace.prediction_errors.iter().position(|x| !(-1.0 - 1e-9..=1.0 + 1e-9).contains(x)) {
        return Err(GecError::InvalidModel(format!("prediction error at episode {t} outside [-1, 1]")));
    }
    if let Some(t) = trace.training_errors.iter().position(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(GecError::InvalidModel(format!("training error at episode {t} is negative or not finite")));
    }
    Ok(())
}

/// Serializable form of an [`OperatorPsr`]; matrices are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrFile {
    pub core: CoreTestSet,
    pub n_obs: usize,
    pub n_actions: usize,
    pub q0: Vec<f64>,
    /// `operators[k][o][a][row][col]`.
    pub operators: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
    pub rewards: Vec<Vec<Vec<f64>>>,
}

impl PsrFile {
    pub fn from_psr(psr: &OperatorPsr) -> Self {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        Self {
            core: psr.core.clone(),
            n_obs: psr.n_obs,
            n_actions: psr.n_actions,
            q0: psr.q0.iter().copied().collect(),
            operators: psr
                .operators
                .iter()
                .map(|per_o| per_o.iter().map(|per_a| per_a.iter().map(rows).collect()).collect())
                .collect(),
            rewards: psr.rewards.clone(),
        }
    }

    pub fn to_psr(&self) -> Result<OperatorPsr> {
        let mut operators = Vec::with_capacity(self.operators.len());
        for (k, per_o) in self.operators.iter().enumerate() {
            let mut ok = Vec::with_capacity(per_o.len());
            for (o, per_a) in per_o.iter().enumerate() {
                let mut oa = Vec::with_capacity(per_a.len());
                for (a, m) in per_a.iter().enumerate() {
                    let ncols = m.first().map_or(0, |r| r.len());
                    if m.iter().any(|r| r.len() != ncols) {
                        return Err(GecError::InvalidModel(format!("operators[{k}][{o}][{a}] has ragged rows")));
                    }
                    oa.push(DMatrix::from_fn(m.len(), ncols, |i, j| m[i][j]));
                }
                ok.push(oa);
            }
            operators.push(ok);
        }
        OperatorPsr::new(
            self.core.clone(),
            self.n_obs,
            self.n_actions,
            DVector::from_vec(self.q0.clone()),
            operators,
            self.rewards.clone(),
        )
    }
}

pub fn load_psr(path: &Path) -> Result<OperatorPsr> {
    let f: PsrFile = read_json(path)?;
    f.to_psr().map_err(|e| context(path, e))
}

/// One `(policy, link)` pair of a PO-bilinear class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoBilinearEntry {
    pub policy: HistoryPolicy,
    pub link: LinkFunction,
}

/// A hypothesis class on disk. Priors default to uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassFile {
    /// Candidate models; with `psr_revealing_steps = m` every POMDP is converted to
    /// its `m`-step weakly revealing PSR.
    Models {
        models: Vec<Environment>,
        #[serde(default)]
        prior: Option<Vec<f64>>,
        truth: usize,
        #[serde(default)]
        psr_revealing_steps: Option<usize>,
    },
    /// Step-factored Q tables `layers[h][i][x][a]`.
    Values {
        initial: Vec<f64>,
        layers: Vec<Vec<Vec<Vec<f64>>>>,
        priors: Vec<Vec<f64>>,
        truth: Vec<usize>,
    },
    PoBilinear {
        hypotheses: Vec<PoBilinearEntry>,
        #[serde(default)]
        prior: Option<Vec<f64>>,
        truth: usize,
    },
}

/// A class ready for an agent run.
#[derive(Debug, Clone)]
pub enum LoadedClass {
    Models {
        class: HypothesisClass<ModelHypothesis>,
        core: Option<CoreTestSet>,
    },
    Values(LayeredValueClass),
    PoBilinear(HypothesisClass<PoBilinearHypothesis>),
}

impl LoadedClass {
    pub fn len(&self) -> usize {
        match self {
            Self::Models { class, .. } => class.len(),
            Self::Values(c) => c.layer_sizes().iter().product(),
            Self::PoBilinear(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The natural agent for this class.
    pub fn default_kind(&self) -> AgentKind {
        match self {
            Self::Models { core: Some(_), .. } => AgentKind::Psr,
            Self::Models { core: None, .. } => AgentKind::ModelBased,
            Self::Values(_) => AgentKind::ModelFree,
            Self::PoBilinear(_) => AgentKind::PoBilinear,
        }
    }

    pub fn agent_class(&self, kind: AgentKind) -> Result<AgentClass<'_>> {
        match (self, kind) {
            (Self::Models { class, core: None }, AgentKind::ModelBased) => Ok(AgentClass::ModelBased(class)),
            (Self::Models { class, core: Some(core) }, AgentKind::Psr) => Ok(AgentClass::Psr { class, core }),
            (Self::Values(c), AgentKind::ModelFree) => Ok(AgentClass::ModelFree(c)),
            (Self::PoBilinear(c), AgentKind::PoBilinear) => Ok(AgentClass::PoBilinear(c)),
            _ => Err(GecError::Config(format!(
                "a {} agent cannot use this class (expected a {} agent)",
                kind,
                self.default_kind()
            ))),
        }
    }
}

fn check_dims(env: &Environment, what: &str, horizon: usize, obs: usize, actions: usize) -> Result<()> {
    if (horizon, obs, actions) != (env.horizon(), env.num_obs(), env.num_actions()) {
        return Err(GecError::Config(format!(
            "{what} has (H, O, A) = ({horizon}, {obs}, {actions}) but the environment has ({}, {}, {})",
            env.horizon(),
            env.num_obs(),
            env.num_actions()
        )));
    }
    Ok(())
}

fn prior_or_uniform(prior: &Option<Vec<f64>>, n: usize) -> Vec<f64> {
    prior.clone().unwrap_or_else(|| vec![1.0 / n.max(1) as f64; n])
}

impl ClassFile {
    /// Validate against the environment, plan every model and cache values.
    pub fn build(&self, env: &Environment) -> Result<LoadedClass> {
        match self {
            Self::Models {
                models,
                prior,
                truth,
                psr_revealing_steps,
            } => {
                let mut hyps = Vec::with_capacity(models.len());
                let mut core = None;
                for (i, m) in models.iter().enumerate() {
                    m.validate().map_err(|e| GecError::InvalidModel(format!("model {i}: {e}")))?;
                    check_dims(env, &format!("model {i}"), m.horizon(), m.num_obs(), m.num_actions())?;
                    let model = match psr_revealing_steps {
                        Some(steps) => {
                            let psr = psr_from_weakly_revealing_pomdp(&m.to_pomdp(), *steps)
                                .map_err(|e| GecError::InvalidModel(format!("model {i}: {e}")))?;
                            if core.get_or_insert_with(|| psr.core.clone()) != &psr.core {
                                return Err(GecError::InvalidModel(format!("model {i} has a different core test set")));
                            }
                            Model::Psr(psr)
                        }
                        None => m.clone().into(),
                    };
                    hyps.push(ModelHypothesis::new(model)?);
                }
                let n = hyps.len();
                Ok(LoadedClass::Models {
                    class: HypothesisClass::new(hyps, prior_or_uniform(prior, n), *truth)?,
                    core,
                })
            }
            Self::Values {
                initial,
                layers,
                priors,
                truth,
            } => {
                let Environment::Mdp(mdp) = env else {
                    return Err(GecError::Config("value classes need an MDP environment".into()));
                };
                if initial.len() != mdp.states || layers.len() != mdp.horizon {
                    return Err(GecError::Config("value class does not match the MDP's states or horizon".into()));
                }
                for (h, layer) in layers.iter().enumerate() {
                    for (i, q) in layer.iter().enumerate() {
                        if q.len() != mdp.states || q.iter().any(|r| r.len() != mdp.actions) {
                            return Err(GecError::Config(format!("Q table {i} at step {h} has the wrong shape")));
                        }
                        if q.iter().flatten().any(|x| !x.is_finite()) {
                            return Err(GecError::Config(format!("Q table {i} at step {h} is not finite")));
                        }
                    }
                }
                Ok(LoadedClass::Values(LayeredValueClass::new(
                    initial.clone(),
                    layers.clone(),
                    priors.clone(),
                    truth.clone(),
                )?))
            }
            Self::PoBilinear { hypotheses, prior, truth } => {
                let Environment::Pomdp(pomdp) = env else {
                    return Err(GecError::Config("PO-bilinear classes need a POMDP environment".into()));
                };
                let hyps = hypotheses
                    .iter()
                    .enumerate()
                    .map(|(i, e)| check_entry(pomdp, e).map_err(|m| GecError::Config(format!("hypothesis {i}: {m}"))))
                    .collect::<Result<Vec<_>>>()?;
                let n = hyps.len();
                Ok(LoadedClass::PoBilinear(HypothesisClass::new(hyps, prior_or_uniform(prior, n), *truth)?))
            }
        }
    }
}

fn check_entry(pomdp: &TabularPomdp, e: &PoBilinearEntry) -> std::result::Result<PoBilinearHypothesis, String> {
    let (h_, o_, a_) = (pomdp.horizon, pomdp.observations, pomdp.actions);
    policy_memory(&e.policy).ok_or("policy has no finite memory table")?;
    if e.policy.horizon() != h_ {
        return Err(format!("policy horizon {} != {h_}", e.policy.horizon()));
    }
    let g = &e.link;
    if (g.n_obs, g.n_actions, g.tables.len()) != (o_, a_, h_) {
        return Err("link function does not match the environment".into());
    }
    for (k, t) in g.tables.iter().enumerate() {
        if t.len() != memory_table_len(g.memory, o_, a_, k) {
            return Err(format!("link table at step {k} has length {}", t.len()));
        }
    }
    Ok(PoBilinearHypothesis::new(e.policy.clone(), g.clone(), pomdp))
}

pub fn load_class(path: &Path, env: &Environment) -> Result<LoadedClass> {
    let f: ClassFile = read_json(path)?;
    f.build(env).map_err(|e| context(path, e))
}

/// Detect the kind of a JSON file and validate it; class files are built against `env`
/// when one is given. Returns a one-line description.
pub fn validate_file(path: &Path, env: Option<&Environment>) -> Result<String> {
    let value: serde_json::Value = read_json(path)?;
    let parse = |e: serde_json::Error| GecError::Parse(format!("{}: {e}", path.display()));
    if value.get("type").is_some() {
        let e: Environment = serde_json::from_value(value).map_err(parse)?;
        e.validate().map_err(|e| context(path, e))?;
        return Ok(format!(
            "environment: H = {}, O = {}, A = {}",
            e.horizon(),
            e.num_obs(),
            e.num_actions()
        ));
    }
    if value.get("kind").is_some() {
        let f: ClassFile = serde_json::from_value(value).map_err(parse)?;
        return match env {
            Some(env) => {
                let c = f.build(env).map_err(|e| context(path, e))?;
                Ok(format!("class: {} hypotheses for a {} agent", c.len(), c.default_kind()))
            }
            None => Ok("class file (structure only; pass an environment to build it)".into()),
        };
    }
    if value.get("operators").is_some() {
        let f: PsrFile = serde_json::from_value(value).map_err(parse)?;
        let psr = f.to_psr().map_err(|e| context(path, e))?;
        return Ok(format!("psr: H = {}, |U_1| = {}", psr.horizon(), psr.core.len_at(0)));
    }
    if value.get("prediction_errors").is_some() {
        let t: GecTrace = serde_json::from_value(value).map_err(parse)?;
        validate_trace(&t).map_err(|e| context(path, e))?;
        return Ok(format!("trace: {} episodes", t.len()));
    }
    Err(GecError::Parse(format!("{}: unrecognised file kind", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::TabularMdp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn psr_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pomdp = TabularPomdp::from_mdp(&TabularMdp::random(2, 2, 2, &mut rng));
        let psr = psr_from_weakly_revealing_pomdp(&pomdp, 1).unwrap();
        let back = PsrFile::from_psr(&psr).to_psr().unwrap();
        assert_eq!(back, psr);
    }

    #[test]
    fn class_rejects_mismatched_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let env = Environment::Mdp(TabularMdp::random(2, 2, 3, &mut rng));
        let other = Environment::Mdp(TabularMdp::random(3, 2, 3, &mut rng));
        let f = ClassFile::Models {
            models: vec![env.clone(), other],
            prior: None,
            truth: 0,
            psr_revealing_steps: None,
        };
        assert!(matches!(f.build(&env), Err(GecError::Config(_))));
    }
}
