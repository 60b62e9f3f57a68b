//! Flat TOML experiment configuration.
//!
//! ```toml
//! agent_kind = "model-based"   # model-free | model-based | psr | po-bilinear
//! T = 2000                     # episodes (PO-bilinear: total episode budget K)
//! env_file = "mdp.json"
//! class_size = 20              # generated class when class_file is absent
//! class_eps = 0.1
//! seeds = [0, 1, 2]
//! ```
//!
//! Unset `gamma`, `eta` and `n_batch` take the prescribed defaults. Any key can be
//! overridden by an environment variable `GECLAB_<KEY>` (upper case, e.g. `GECLAB_T`,
//! `GECLAB_GAMMA`, `GECLAB_SEEDS="[1, 2]"`). Relative paths are resolved against the
//! directory of the config file.

use anyhow::{bail, Context, Result};
use geclab::agents::AgentKind;
use geclab::decision::ExplorationKind;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};

pub const ENV_PREFIX: &str = "GECLAB_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Defaults to the natural agent of the class.
    #[serde(default)]
    pub agent_kind: Option<AgentKind>,
    #[serde(rename = "T")]
    pub episodes: usize,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub n_batch: Option<usize>,
    /// Single seed, used when `seeds` is empty.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub env_file: PathBuf,
    #[serde(default)]
    pub class_file: Option<PathBuf>,
    /// Generated class: number of hypotheses (models) or Q tables per step (model-free).
    #[serde(default = "default_class_size")]
    pub class_size: usize,
    /// Perturbation scale of the generated class.
    #[serde(default = "default_class_eps")]
    pub class_eps: f64,
    #[serde(default)]
    pub class_seed: u64,
    /// PO-bilinear: memory length of the policy class.
    #[serde(default = "default_memory")]
    pub memory: usize,
    /// PO-bilinear: number of policies (the class holds their squares).
    #[serde(default = "default_policies")]
    pub n_policies: usize,
    /// PSR: revealing window of the generated class.
    #[serde(default = "default_revealing")]
    pub psr_revealing_steps: usize,
    /// Overrides the complexity bound used in the prescribed tuning.
    #[serde(default)]
    pub d_gec: Option<f64>,
    #[serde(default)]
    pub exploration: Option<ExplorationKind>,
    #[serde(default)]
    pub track_gec: bool,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_class_size() -> usize {
    10
}
fn default_class_eps() -> f64 {
    0.1
}
fn default_memory() -> usize {
    1
}
fn default_policies() -> usize {
    4
}
fn default_revealing() -> usize {
    1
}

/// Parse an override value as a TOML value, falling back to a plain string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn override_key(var: &str) -> Option<String> {
    let key = var.strip_prefix(ENV_PREFIX)?;
    Some(if key == "T" { key.to_string() } else { key.to_ascii_lowercase() })
}

impl ExperimentConfig {
    /// Parse TOML text and apply `GECLAB_*` overrides from `vars`.
    pub fn parse(text: &str, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        for (var, raw) in vars {
            if let Some(key) = override_key(&var) {
                table.insert(key, parse_value(&raw));
            }
        }
        let cfg: Self = toml::Value::Table(table).try_into().context("invalid config")?;
        Ok(cfg)
    }

    /// Read a config file, apply overrides and resolve relative paths.
    pub fn load(path: &Path, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text, vars).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.env_file);
        if let Some(p) = self.class_file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.out_dir.as_mut() {
            fix(p);
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed.unwrap_or(0)]
        } else {
            self.seeds.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            bail!("T must be at least 1");
        }
        let seeds = self.seed_list();
        if seeds.iter().collect::<HashSet<_>>().len() != seeds.len() {
            bail!("seeds must be distinct");
        }
        if !self.env_file.is_file() {
            bail!("env_file {} does not exist", self.env_file.display());
        }
        if let Some(p) = &self.class_file {
            if !p.is_file() {
                bail!("class_file {} does not exist", p.display());
            }
        }
        for (name, v) in [("gamma", self.gamma), ("eta", self.eta), ("d_gec", self.d_gec)] {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    bail!("{name} must be a non-negative number");
                }
            }
        }
        if self.n_batch == Some(0) {
            bail!("n_batch must be at least 1");
        }
        if self.class_size == 0 || self.n_policies == 0 {
            bail!("class_size and n_policies must be at least 1");
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(())
    }
}

/// `--seeds` value: a count `N` (seeds `0..N`) or a comma-separated list.
pub fn parse_seeds(raw: &str) -> Result<Vec<u64>> {
    let raw = raw.trim();
    if raw.contains(',') {
        raw.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed `{s}`")))
            .collect()
    } else {
        let n: u64 = raw.parse().with_context(|| format!("bad seed count `{raw}`"))?;
        Ok((0..n).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "agent_kind = \"model-based\"\nT = 50\nenv_file = \"env.json\"\n";

    #[test]
    fn defaults_and_overrides() {
        let cfg = ExperimentConfig::parse(BASE, Vec::new()).unwrap();
        assert_eq!(cfg.episodes, 50);
        assert_eq!(cfg.seed_list(), vec![0]);
        assert_eq!(cfg.gamma, None);
        let vars = vec![
            ("GECLAB_T".to_string(), "7".to_string()),
            ("GECLAB_GAMMA".to_string(), "1.5".to_string()),
            ("GECLAB_SEEDS".to_string(), "[3, 4]".to_string()),
            ("GECLAB_AGENT_KIND".to_string(), "psr".to_string()),
            ("OTHER".to_string(), "x".to_string()),
        ];
        let cfg = ExperimentConfig::parse(BASE, vars).unwrap();
        assert_eq!(cfg.episodes, 7);
        assert_eq!(cfg.gamma, Some(1.5));
        assert_eq!(cfg.seed_list(), vec![3, 4]);
        assert_eq!(cfg.agent_kind, Some(AgentKind::Psr));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse(&format!("{BASE}bogus = 1\n"), Vec::new()).is_err());
    }

    #[test]
    fn seed_flags() {
        assert_eq!(parse_seeds("3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("5,9, 11").unwrap(), vec![5, 9, 11]);
        assert!(parse_seeds("x").is_err());
    }
}
