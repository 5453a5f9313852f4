//! JSON experiment configuration.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::environment::EnvSettings;
use crate::error::{Error, Result};
use crate::harness::trace::TraceLevel;
use crate::optimizer::RLConfig;
use crate::orchestrator::{ActionToken, PartitionScheme, PolicyParams, VocabConfig, Vocabulary, FEATURE_DIM};
use crate::rewards::{PARLConfig, ToggleConfig};
use crate::rng::{derive_seed, rng_for};
use crate::task_gen::{generate, StepLimits, TaskParams, TaskSpec};

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeRange {
    pub min: u32,
    pub max: u32,
}

impl SizeRange {
    pub const fn fixed(n: u32) -> Self {
        SizeRange { min: n, max: n }
    }

    fn sample(&self, rng: &mut impl Rng) -> u32 {
        rng.gen_range(self.min..=self.max)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.min == 0 || self.min > self.max {
            return Err(Error::Config(format!("{what}: need 1 <= min <= max, got {}..={}", self.min, self.max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyRange {
    WideSearch { n_items: SizeRange, sources_per_item: SizeRange },
    DeepSearch { depth: SizeRange, branching: SizeRange },
    BatchDownload { n_files: SizeRange, file_cost: SizeRange },
}

impl FamilyRange {
    fn sample(&self, rng: &mut impl Rng) -> TaskParams {
        match self {
            FamilyRange::WideSearch { n_items, sources_per_item } => {
                TaskParams::WideSearch { n_items: n_items.sample(rng), sources_per_item: sources_per_item.sample(rng) }
            }
            FamilyRange::DeepSearch { depth, branching } => {
                TaskParams::DeepSearch { depth: depth.sample(rng), branching: branching.sample(rng) }
            }
            FamilyRange::BatchDownload { n_files, file_cost } => {
                TaskParams::BatchDownload { n_files: n_files.sample(rng), file_cost: file_cost.sample(rng) }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            FamilyRange::WideSearch { n_items, sources_per_item } => {
                n_items.validate("n_items")?;
                sources_per_item.validate("sources_per_item")
            }
            FamilyRange::DeepSearch { depth, branching } => {
                depth.validate("depth")?;
                branching.validate("branching")
            }
            FamilyRange::BatchDownload { n_files, file_cost } => {
                n_files.validate("n_files")?;
                file_cost.validate("file_cost")
            }
        }
    }
}

/// Families are used round-robin; sizes are drawn uniformly per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDistribution {
    pub families: Vec<FamilyRange>,
    pub count: usize,
    /// Overrides the per-kind defaults when set.
    #[serde(default)]
    pub limits: Option<StepLimits>,
}

impl TaskDistribution {
    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::Config("task distribution has no families".into()));
        }
        if self.count == 0 {
            return Err(Error::Config("task count must be >= 1".into()));
        }
        if let Some(l) = &self.limits {
            l.validate()?;
        }
        self.families.iter().try_for_each(FamilyRange::validate)
    }

    /// `count` tasks drawn deterministically from `(seed, salt)`.
    pub fn sample(&self, seed: u64, salt: u64, count: usize) -> Result<Vec<Arc<TaskSpec>>> {
        (0..count)
            .map(|i| {
                let mut rng = rng_for(&[seed, salt, i as u64]);
                let params = self.families[i % self.families.len()].sample(&mut rng);
                let mut task = generate(derive_seed(&[seed, salt, i as u64, 1]), params)?;
                if let Some(l) = self.limits {
                    task = task.with_limits(l);
                }
                Ok(Arc::new(task))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum PolicySpec {
    Serial,
    Swarm {
        k: u32,
        #[serde(default = "one")]
        rounds: u32,
        #[serde(default = "size_balanced")]
        scheme: PartitionScheme,
        #[serde(default = "searcher")]
        template: String,
    },
    /// The trained parameters (or the initial ones when nothing was trained).
    Learned,
    /// The parameters before any update.
    Initial,
}

fn one() -> u32 {
    1
}
fn size_balanced() -> PartitionScheme {
    PartitionScheme::SizeBalanced
}
fn searcher() -> String {
    "searcher".into()
}
fn default_concurrency() -> usize {
    1
}

impl PolicySpec {
    pub fn label(&self) -> String {
        match self {
            PolicySpec::Serial => "serial".into(),
            PolicySpec::Swarm { k, rounds, .. } => format!("swarm-k{k}-r{rounds}"),
            PolicySpec::Learned => "learned".into(),
            PolicySpec::Initial => "initial".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub policies: Vec<PolicySpec>,
    /// Number of evaluation tasks; defaults to the training task count.
    pub tasks: Option<usize>,
    pub episodes_per_task: usize,
    /// Target r_perf levels for the serial-vs-swarm speedup table.
    pub thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { policies: vec![], tasks: None, episodes_per_task: 1, thresholds: vec![] }
    }
}

/// Initial weight of `token` on the bias feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenBias {
    pub token: ActionToken,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    pub tasks: TaskDistribution,
    #[serde(default)]
    pub rl: RLConfig,
    #[serde(default)]
    pub parl: PARLConfig,
    #[serde(default)]
    pub toggle: Option<ToggleConfig>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
    /// Nothing is written when absent.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub trace_level: TraceLevel,
    #[serde(default)]
    pub vocab: VocabConfig,
    #[serde(default)]
    pub env: EnvSettings,
    #[serde(default)]
    pub init: Vec<TokenBias>,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Write a checkpoint every this many iterations; 0 writes only the final one.
    #[serde(default)]
    pub checkpoint_every: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Every check that can fail before a rollout starts.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.concurrency_limit == 0 {
            return Err(Error::Config("concurrency_limit must be >= 1".into()));
        }
        self.tasks.validate().map_err(cfg_err)?;
        self.rl.validate().map_err(cfg_err)?;
        self.parl.validate().map_err(cfg_err)?;
        if let Some(t) = &self.toggle {
            t.validate().map_err(cfg_err)?;
        }
        self.env.validate().map_err(cfg_err)?;
        let vocab = self.vocabulary()?;
        for b in &self.init {
            if vocab.index_of(&b.token).is_none() {
                return Err(Error::Config(format!("init token {:?} is not in the vocabulary", b.token)));
            }
            if !b.weight.is_finite() {
                return Err(Error::Config("init weights must be finite".into()));
            }
        }
        for p in &self.eval.policies {
            if let PolicySpec::Swarm { k, rounds, template, .. } = p {
                if *k == 0 || *rounds == 0 {
                    return Err(Error::Config("swarm policy needs k >= 1 and rounds >= 1".into()));
                }
                if self.env.template(template).is_none() {
                    return Err(Error::Config(format!("swarm template {template:?} is not configured")));
                }
            }
        }
        if self.eval.episodes_per_task == 0 || self.eval.tasks == Some(0) {
            return Err(Error::Config("evaluation needs at least one task and episode".into()));
        }
        if self.eval.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Config("speedup thresholds must lie in [0, 1]".into()));
        }
        if !self.eval.thresholds.is_empty() {
            let has = |f: fn(&PolicySpec) -> bool| self.eval.policies.iter().any(f);
            if !has(|p| matches!(p, PolicySpec::Serial)) || !has(|p| matches!(p, PolicySpec::Swarm { .. })) {
                return Err(Error::Config("speedup thresholds need a serial and a swarm policy".into()));
            }
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::from_config(&self.vocab)
    }

    /// Zero weights plus the configured bias-feature offsets.
    pub fn initial_params(&self, vocab: &Vocabulary) -> PolicyParams {
        let mut p = PolicyParams::zeros(FEATURE_DIM, vocab.len());
        for b in &self.init {
            if let Some(a) = vocab.index_of(&b.token) {
                *p.weight_mut(0, a) += b.weight;
            }
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "tasks": {"families": [{"family": "wide_search",
                "n_items": {"min": 4, "max": 8}, "sources_per_item": {"min": 1, "max": 1}}], "count": 5},
            "seeds": [1, 2]
        }"#
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_json(minimal()).unwrap();
        assert_eq!(cfg.mode, Mode::Train);
        assert_eq!(cfg.rl, RLConfig::default());
        assert_eq!(cfg.concurrency_limit, 1);
        assert_eq!(cfg.trace_level, TraceLevel::Full);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn zero_seeds_is_config_error() {
        let mut cfg = ExperimentConfig::from_json(minimal()).unwrap();
        cfg.seeds.clear();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn bad_values_are_config_errors() {
        let base = ExperimentConfig::from_json(minimal()).unwrap();
        let mut c = base.clone();
        c.concurrency_limit = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base.clone();
        c.rl.alpha = 0.1;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base.clone();
        c.tasks.families = vec![FamilyRange::DeepSearch { depth: SizeRange { min: 3, max: 2 }, branching: SizeRange::fixed(2) }];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base;
        c.eval.thresholds = vec![0.5];
        c.eval.policies = vec![PolicySpec::Serial];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_json("{"), Err(Error::Config(_))));
    }

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let cfg = ExperimentConfig::from_json(minimal()).unwrap();
        let a = cfg.tasks.sample(3, 0, 20).unwrap();
        let b = cfg.tasks.sample(3, 0, 20).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|t| (4..=8).contains(&t.unit_count())));
        assert_ne!(a, cfg.tasks.sample(3, 1, 20).unwrap());
    }

    #[test]
    fn init_biases_land_on_bias_feature() {
        let mut cfg = ExperimentConfig::from_json(minimal()).unwrap();
        cfg.init = vec![TokenBias { token: ActionToken::Finish, weight: -2.0 }];
        let vocab = cfg.vocabulary().unwrap();
        let p = cfg.initial_params(&vocab);
        let a = vocab.index_of(&ActionToken::Finish).unwrap();
        assert_eq!(p.weight(0, a), -2.0);
        assert_eq!(p.theta.iter().filter(|w| **w != 0.0).count(), 1);
    }
}
