use super::planning::{plan_history_tree, plan_mdp, HISTORY_NODE_CAP};
use crate::decision::{argmax_lowest, Environment, HistoryPolicy, ObservableModel, TabularMdp, TabularPomdp, Trajectory};
use crate::error::{GecError, Result};
use crate::psr::OperatorPsr;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// A candidate model of the environment.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Mdp(TabularMdp),
    Pomdp(TabularPomdp),
    Psr(OperatorPsr),
}

impl Model {
    fn inner(&self) -> &dyn ObservableModel {
        match self {
            Self::Mdp(m) => m,
            Self::Pomdp(p) => p,
            Self::Psr(p) => p,
        }
    }
}

impl From<Environment> for Model {
    fn from(e: Environment) -> Self {
        match e {
            Environment::Mdp(m) => Self::Mdp(m),
            Environment::Pomdp(p) => Self::Pomdp(p),
        }
    }
}

impl ObservableModel for Model {
    fn horizon(&self) -> usize {
        self.inner().horizon()
    }
    fn num_obs(&self) -> usize {
        self.inner().num_obs()
    }
    fn num_actions(&self) -> usize {
        self.inner().num_actions()
    }
    fn reward(&self, step: usize, obs: usize, action: usize) -> f64 {
        self.inner().reward(step, obs, action)
    }
    fn dynamics_probability(&self, obs: &[usize], actions: &[usize]) -> f64 {
        self.inner().dynamics_probability(obs, actions)
    }
    fn initial_filter(&self) -> Vec<f64> {
        self.inner().initial_filter()
    }
    fn next_obs_dist(&self, step: usize, filter: &[f64], action: usize) -> Result<Vec<f64>> {
        self.inner().next_obs_dist(step, filter, action)
    }
    fn advance(&self, step: usize, filter: &[f64], obs: usize, action: usize) -> Result<Vec<f64>> {
        self.inner().advance(step, filter, obs, action)
    }
}

/// A model together with its optimal value and policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelHypothesis {
    pub model: Model,
    pub value: f64,
    pub policy: HistoryPolicy,
}

impl ModelHypothesis {
    /// Plans once: value iteration for MDPs, history-tree search otherwise.
    pub fn new(model: Model) -> Result<Self> {
        let (value, policy) = match &model {
            Model::Mdp(m) => {
                let sol = plan_mdp(m);
                (sol.value, sol.history_policy())
            }
            other => plan_history_tree(other, HISTORY_NODE_CAP)?,
        };
        Ok(Self { model, value, policy })
    }
}

/// Per-step Q tables `q[h][x][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueHypothesis {
    pub q: Vec<Vec<Vec<f64>>>,
}

impl ValueHypothesis {
    /// `V_h(x) = max_a Q_h(x, a)`; zero past the horizon.
    pub fn v(&self, step: usize, x: usize) -> f64 {
        match self.q.get(step) {
            Some(layer) => layer[x].iter().copied().fold(f64::NEG_INFINITY, f64::max),
            None => 0.0,
        }
    }

    pub fn greedy(&self, step: usize, x: usize) -> usize {
        argmax_lowest(&self.q[step][x])
    }

    pub fn policy(&self) -> HistoryPolicy {
        HistoryPolicy::GreedyOfQ { q: self.q.clone() }
    }

    /// `E_{x_1 ~ initial} V_1(x_1)`.
    pub fn value(&self, initial: &[f64]) -> f64 {
        initial.iter().enumerate().map(|(x, p)| p * self.v(0, x)).sum()
    }
}

/// Finite hypothesis set with a prior and the index of the true hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisClass<T> {
    pub hypotheses: Vec<T>,
    pub prior: Vec<f64>,
    pub truth: usize,
}

impl<T> HypothesisClass<T> {
    pub fn new(hypotheses: Vec<T>, prior: Vec<f64>, truth: usize) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(GecError::Config("empty hypothesis class".into()));
        }
        if prior.len() != hypotheses.len() {
            return Err(GecError::Config(format!("{} prior weights for {} hypotheses", prior.len(), hypotheses.len())));
        }
        crate::decision::check_distribution(&prior, "prior")?;
        if truth >= hypotheses.len() || prior[truth] <= 0.0 {
            return Err(GecError::Config("the true hypothesis must be present with positive prior weight".into()));
        }
        Ok(Self { hypotheses, prior, truth })
    }

    pub fn uniform(hypotheses: Vec<T>, truth: usize) -> Result<Self> {
        let n = hypotheses.len();
        Self::new(hypotheses, vec![1.0 / n.max(1) as f64; n], truth)
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }
}

/// Dirichlet resample of a probability row with concentration `row / eps`;
/// zero entries stay zero.
pub fn perturb_row<R: Rng + ?Sized>(row: &[f64], eps: f64, rng: &mut R) -> Vec<f64> {
    if eps <= 0.0 {
        return row.to_vec();
    }
    let draws: Vec<f64> = row
        .iter()
        .map(|&p| {
            if p > 0.0 {
                Gamma::new(p / eps, 1.0).map(|g| g.sample(rng)).unwrap_or(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let s: f64 = draws.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return row.to_vec();
    }
    draws.into_iter().map(|x| x / s).collect()
}

/// Truth at index 0 plus `count - 1` perturbed copies, under a uniform prior.
pub fn make_perturbation_class<R: Rng + ?Sized>(
    truth: &Model,
    count: usize,
    eps: f64,
    rng: &mut R,
) -> Result<HypothesisClass<ModelHypothesis>> {
    if count == 0 {
        return Err(GecError::Config("class size must be at least 1".into()));
    }
    let mut hyps = vec![ModelHypothesis::new(truth.clone())?];
    for _ in 1..count {
        let model = match truth {
            Model::Mdp(m) => {
                let mut m = m.clone();
                m.transitions.iter_mut().flatten().flatten().for_each(|row| *row = perturb_row(row, eps, rng));
                Model::Mdp(m)
            }
            Model::Pomdp(p) => {
                let mut p = p.clone();
                p.transitions.iter_mut().flatten().flatten().for_each(|row| *row = perturb_row(row, eps, rng));
                p.emissions.iter_mut().flatten().for_each(|row| *row = perturb_row(row, eps, rng));
                Model::Pomdp(p)
            }
            Model::Psr(_) => {
                return Err(GecError::Config("perturbation classes need an MDP or POMDP truth".into()));
            }
        };
        hyps.push(ModelHypothesis::new(model)?);
    }
    HypothesisClass::uniform(hyps, 0)
}

/// Value-based class factored over steps: each step holds its own list of Q tables.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredValueClass {
    pub initial: Vec<f64>,
    /// `layers[h][i][x][a]`.
    pub layers: Vec<Vec<Vec<Vec<f64>>>>,
    /// `priors[h][i]`.
    pub priors: Vec<Vec<f64>>,
    /// True index per step.
    pub truth: Vec<usize>,
}

impl LayeredValueClass {
    pub fn new(initial: Vec<f64>, layers: Vec<Vec<Vec<Vec<f64>>>>, priors: Vec<Vec<f64>>, truth: Vec<usize>) -> Result<Self> {
        if layers.is_empty() || layers.len() != priors.len() || layers.len() != truth.len() {
            return Err(GecError::Config("layers, priors and truth must cover the same steps".into()));
        }
        for (h, (l, p)) in layers.iter().zip(&priors).enumerate() {
            if l.is_empty() || l.len() != p.len() {
                return Err(GecError::Config(format!("step {h}: {} tables, {} prior weights", l.len(), p.len())));
            }
            crate::decision::check_distribution(p, &format!("prior at step {h}"))?;
            if truth[h] >= l.len() || p[truth[h]] <= 0.0 {
                return Err(GecError::Config(format!("step {h}: truth missing or with zero prior")));
            }
        }
        Ok(Self { initial, layers, priors, truth })
    }

    pub fn horizon(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.len()).collect()
    }

    /// `V_h(x)` of the `i`-th table at step `h`; zero past the horizon.
    pub fn v(&self, step: usize, i: usize, x: usize) -> f64 {
        match self.layers.get(step) {
            Some(l) => l[i][x].iter().copied().fold(f64::NEG_INFINITY, f64::max),
            None => 0.0,
        }
    }

    /// Value of any tuple whose first index is `i0`.
    pub fn value_of_first(&self, i0: usize) -> f64 {
        self.initial.iter().enumerate().map(|(x, p)| p * self.v(0, i0, x)).sum()
    }

    pub fn hypothesis(&self, index: &[usize]) -> ValueHypothesis {
        ValueHypothesis {
            q: index.iter().enumerate().map(|(h, &i)| self.layers[h][i].clone()).collect(),
        }
    }

    /// Prior of a tuple (product over steps).
    pub fn prior_of(&self, index: &[usize]) -> f64 {
        index.iter().enumerate().map(|(h, &i)| self.priors[h][i]).product()
    }
}

/// Per step: `Q*_h` at index 0 and `per_layer - 1` copies with uniform noise of
/// magnitude `eps`, clipped to `[0, 1]`; uniform layer priors.
pub fn make_value_class<R: Rng + ?Sized>(mdp: &TabularMdp, per_layer: usize, eps: f64, rng: &mut R) -> Result<LayeredValueClass> {
    if per_layer == 0 {
        return Err(GecError::Config("layer size must be at least 1".into()));
    }
    let sol = plan_mdp(mdp);
    let layers: Vec<Vec<Vec<Vec<f64>>>> = sol
        .q
        .iter()
        .map(|qh| {
            let mut l = vec![qh.clone()];
            for _ in 1..per_layer {
                l.push(
                    qh.iter()
                        .map(|row| row.iter().map(|&x| (x + eps * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0)).collect())
                        .collect(),
                );
            }
            l
        })
        .collect();
    let priors = vec![vec![1.0 / per_layer as f64; per_layer]; mdp.horizon];
    LayeredValueClass::new(mdp.initial.clone(), layers, priors, vec![0; mdp.horizon])
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub pass: bool,
    pub max_deviation: f64,
    /// Where the largest deviation occurred.
    pub location: Option<String>,
}

const AUDIT_TOL: f64 = 1e-10;

/// Compare the stored truth against the environment's trajectory probabilities and
/// check that its cached value matches a fresh plan.
pub fn audit_model_class(class: &HypothesisClass<ModelHypothesis>, env: &Environment, trajectories: &[Trajectory]) -> Result<AuditReport> {
    let truth = &class.hypotheses[class.truth];
    let mut worst = 0.0;
    let mut location = None;
    for (i, t) in trajectories.iter().enumerate() {
        for k in 1..=t.horizon() {
            let a = env.dynamics_probability(&t.observations[..k], &t.actions);
            let b = truth.model.dynamics_probability(&t.observations[..k], &t.actions);
            let d = (a - b).abs();
            if d > worst {
                worst = d;
                location = Some(format!("trajectory {i}, prefix length {k}"));
            }
        }
    }
    let replanned = ModelHypothesis::new(truth.model.clone())?;
    let dv = (replanned.value - truth.value).abs();
    if dv > worst {
        worst = dv;
        location = Some("cached optimal value".into());
    }
    Ok(AuditReport {
        pass: worst <= AUDIT_TOL,
        max_deviation: worst,
        location: if worst > 0.0 { location } else { None },
    })
}

/// Compare the stored true Q tables against `Q*` of the MDP.
pub fn audit_value_class(class: &LayeredValueClass, mdp: &TabularMdp) -> AuditReport {
    let sol = plan_mdp(mdp);
    let mut worst = 0.0;
    let mut location = None;
    for (h, &i) in class.truth.iter().enumerate() {
        for (x, row) in class.layers[h][i].iter().enumerate() {
            for (a, &q) in row.iter().enumerate() {
                let d = (q - sol.q[h][x][a]).abs();
                if d > worst {
                    worst = d;
                    location = Some(format!("step {h}, state {x}, action {a}"));
                }
            }
        }
    }
    AuditReport {
        pass: worst <= AUDIT_TOL,
        max_deviation: worst,
        location,
    }
}
