//! The trainable orchestrator: a linear-softmax policy over a finite
//! action-token vocabulary, decoding of tokens into environment actions and
//! episode rollout that records the sampling log-probability of every token.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::sync::Arc;

use crate::environment::{
    Action, Answer, EnvSettings, Environment, Observation, SubagentProfile, Subtask, SubtaskAssignment, Tool,
};
pub use crate::environment::TerminalFlag;
use crate::error::{Error, Result};
use crate::metrics::StageRecord;
use crate::rng::{derive_seed, unit_f64};
use crate::rewards::RewardBreakdown;
use crate::task_gen::{TaskKind, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    Contiguous,
    RoundRobin,
    SizeBalanced,
}

impl PartitionScheme {
    pub const ALL: [PartitionScheme; 3] =
        [PartitionScheme::Contiguous, PartitionScheme::RoundRobin, PartitionScheme::SizeBalanced];

    pub fn as_str(self) -> &'static str {
        match self {
            PartitionScheme::Contiguous => "contiguous",
            PartitionScheme::RoundRobin => "round_robin",
            PartitionScheme::SizeBalanced => "size_balanced",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ActionToken {
    InvokeTool { tool: Tool },
    CreateAgent { template: String },
    AssignGroup { k: u32, scheme: PartitionScheme },
    Finish,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabConfig {
    pub tools: Vec<Tool>,
    pub templates: Vec<String>,
    pub group_sizes: Vec<u32>,
    pub schemes: Vec<PartitionScheme>,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            tools: vec![Tool::Search, Tool::Fetch, Tool::Download],
            templates: vec!["searcher".into()],
            group_sizes: vec![2, 4, 8, 16],
            schemes: vec![PartitionScheme::Contiguous, PartitionScheme::RoundRobin, PartitionScheme::SizeBalanced],
        }
    }
}

/// Fixed, ordered token set of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<ActionToken>,
    #[serde(skip)]
    index: HashMap<ActionToken, usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Vocabulary {
    pub fn new(tokens: Vec<ActionToken>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {t:?}")));
            }
            if let ActionToken::AssignGroup { k: 0, .. } = t {
                return Err(Error::Config("group size must be >= 1".into()));
            }
        }
        if tokens.is_empty() {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn from_config(cfg: &VocabConfig) -> Result<Self> {
        let mut tokens: Vec<ActionToken> = cfg.tools.iter().map(|&tool| ActionToken::InvokeTool { tool }).collect();
        tokens.extend(cfg.templates.iter().map(|t| ActionToken::CreateAgent { template: t.clone() }));
        for &k in &cfg.group_sizes {
            for &scheme in &cfg.schemes {
                tokens.push(ActionToken::AssignGroup { k, scheme });
            }
        }
        tokens.push(ActionToken::Finish);
        Self::new(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[ActionToken] {
        &self.tokens
    }

    pub fn get(&self, i: usize) -> Option<&ActionToken> {
        self.tokens.get(i)
    }

    pub fn index_of(&self, token: &ActionToken) -> Option<usize> {
        if self.index.len() == self.tokens.len() {
            self.index.get(token).copied()
        } else {
            // Deserialized without the lookup table.
            self.tokens.iter().position(|t| t == token)
        }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(self) -> Result<Self> {
        Self::new(self.tokens)
    }

    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({ "tokens": self.tokens })
    }
}

pub const FEATURE_NAMES: [&str; 10] = [
    "bias",
    "remaining_steps",
    "remaining_tokens",
    "unresolved_fraction",
    "live_agents",
    "last_finish_rate",
    "remaining_units",
    "kind_wide_search",
    "kind_deep_search",
    "kind_batch_download",
];
pub const FEATURE_DIM: usize = FEATURE_NAMES.len();

pub mod feature {
    pub const BIAS: usize = 0;
    pub const REMAINING_STEPS: usize = 1;
    pub const REMAINING_TOKENS: usize = 2;
    pub const UNRESOLVED: usize = 3;
    pub const LIVE_AGENTS: usize = 4;
    pub const LAST_FINISH_RATE: usize = 5;
    pub const REMAINING_UNITS: usize = 6;
    pub const KIND_WIDE: usize = 7;
}

const AGENT_SCALE: f64 = 4.0;
const UNIT_SCALE: f64 = 32.0;

pub fn featurize(obs: &Observation, task: &TaskSpec) -> Vec<f64> {
    let limits = task.limits;
    let unresolved = obs.unresolved_units as f64;
    let mut f = vec![0.0; FEATURE_DIM];
    f[feature::BIAS] = 1.0;
    f[feature::REMAINING_STEPS] = obs.remaining_orchestrator_steps as f64 / limits.orchestrator_max_steps as f64;
    f[feature::REMAINING_TOKENS] =
        limits.max_tokens.saturating_sub(obs.actions_taken) as f64 / limits.max_tokens as f64;
    f[feature::UNRESOLVED] = if obs.total_units == 0 { 0.0 } else { unresolved / obs.total_units as f64 };
    f[feature::LIVE_AGENTS] = (obs.live_agents as f64).min(AGENT_SCALE) / AGENT_SCALE;
    f[feature::LAST_FINISH_RATE] = obs.last_finish_rate;
    f[feature::REMAINING_UNITS] = unresolved.min(UNIT_SCALE) / UNIT_SCALE;
    let kind_slot = match task.kind {
        TaskKind::WideSearch => 0,
        TaskKind::DeepSearch => 1,
        TaskKind::BatchDownload => 2,
    };
    f[feature::KIND_WIDE + kind_slot] = 1.0;
    f
}

/// Weights of the linear-softmax policy, one per (feature, token) pair,
/// stored feature-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub n_features: usize,
    pub n_actions: usize,
    pub theta: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(n_features: usize, n_actions: usize) -> Self {
        PolicyParams { n_features, n_actions, theta: vec![0.0; n_features * n_actions] }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn weight(&self, feature: usize, action: usize) -> f64 {
        self.theta[feature * self.n_actions + action]
    }

    pub fn weight_mut(&mut self, feature: usize, action: usize) -> &mut f64 {
        &mut self.theta[feature * self.n_actions + action]
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != self.n_features * self.n_actions {
            return Err(Error::DimensionMismatch {
                expected: self.n_features * self.n_actions,
                actual: self.theta.len(),
            });
        }
        if self.theta.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid_param("policy weights must be finite"));
        }
        Ok(())
    }

    /// Content hash identifying this parameter snapshot.
    pub fn snapshot_id(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_features as u64).to_le_bytes());
        h.update((self.n_actions as u64).to_le_bytes());
        for w in &self.theta {
            h.update(w.to_bits().to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn scores(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, actual: features.len() });
        }
        if self.theta.len() != self.n_features * self.n_actions {
            return Err(Error::DimensionMismatch {
                expected: self.n_features * self.n_actions,
                actual: self.theta.len(),
            });
        }
        let mut s = vec![0.0; self.n_actions];
        for (f, &x) in features.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let row = &self.theta[f * self.n_actions..(f + 1) * self.n_actions];
            for (acc, w) in s.iter_mut().zip(row) {
                *acc += x * w;
            }
        }
        Ok(s)
    }

    /// log π(a | features) for every token.
    pub fn log_probs(&self, features: &[f64]) -> Result<Vec<f64>> {
        let s = self.scores(features)?;
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        Ok(s.into_iter().map(|v| v - log_z).collect())
    }

    /// Adds `scale * ∇θ log π(action | features)` into `grad`.
    pub fn accumulate_grad_log_prob(&self, features: &[f64], action: usize, scale: f64, grad: &mut [f64]) -> Result<()> {
        let probs = action_distribution(self, features)?;
        let na = self.n_actions;
        for (f, &x) in features.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let row = &mut grad[f * na..(f + 1) * na];
            for (b, (g, p)) in row.iter_mut().zip(&probs).enumerate() {
                let indicator = if b == action { 1.0 } else { 0.0 };
                *g += scale * x * (indicator - p);
            }
        }
        Ok(())
    }
}

/// Softmax of the linear scores.
pub fn action_distribution(params: &PolicyParams, features: &[f64]) -> Result<Vec<f64>> {
    let s = params.scores(features)?;
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Inverse-CDF sample for a uniform draw `u` in [0, 1). Returns the token
/// index and its log-probability.
pub fn sample_action(dist: &[f64], u: f64) -> (usize, f64) {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc && p > 0.0 {
            return (i, p.ln());
        }
    }
    // Rounding left the cumulative sum just below u.
    (last_positive, dist[last_positive].ln())
}

/// Splits `units` into exactly `k` groups (possibly empty) under `scheme`.
pub fn partition(units: &[usize], costs: &[u32], k: usize, scheme: PartitionScheme) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); k];
    if k == 0 {
        return groups;
    }
    match scheme {
        PartitionScheme::Contiguous => {
            let chunk = units.len().div_ceil(k).max(1);
            for (i, &u) in units.iter().enumerate() {
                groups[i / chunk].push(u);
            }
        }
        PartitionScheme::RoundRobin => {
            for (i, &u) in units.iter().enumerate() {
                groups[i % k].push(u);
            }
        }
        PartitionScheme::SizeBalanced => {
            // Longest-processing-time-first onto the least loaded group.
            let mut order: Vec<usize> = (0..units.len()).collect();
            order.sort_by(|&a, &b| costs[b].cmp(&costs[a]).then(a.cmp(&b)));
            let mut load = vec![0u64; k];
            for i in order {
                let g = (0..k).min_by_key(|&g| (load[g], groups[g].len(), g)).unwrap();
                load[g] += costs[i] as u64;
                groups[g].push(units[i]);
            }
            for g in &mut groups {
                g.sort_unstable();
            }
        }
    }
    groups
}

pub fn decode_action(token: &ActionToken, env: &Environment) -> Action {
    let task = env.task();
    let unresolved = env.unresolved_units();
    match token {
        ActionToken::InvokeTool { tool } => {
            let target = unresolved.first().copied().unwrap_or(0);
            let mut call = env.tool_call_for(target);
            if *tool != call.tool {
                call.tool = *tool;
                call.query = task.ground_truth.unit_key(target).to_string();
            }
            Action::Tool(call)
        }
        ActionToken::CreateAgent { template } => {
            let profile = env
                .settings()
                .template(template)
                .cloned()
                .unwrap_or_else(|| SubagentProfile::new(template.clone(), 1.0));
            Action::CreateSubagent(profile)
        }
        ActionToken::AssignGroup { k, scheme } => {
            let agents = env.agents();
            if agents.is_empty() {
                return Action::Noop { reason: "assign_task with no created agents".into() };
            }
            let costs: Vec<u32> = unresolved.iter().map(|&u| task.ground_truth.unit_cost(u)).collect();
            let groups = partition(&unresolved, &costs, *k as usize, *scheme);
            Action::AssignTasks(
                groups
                    .into_iter()
                    .enumerate()
                    .map(|(i, units)| SubtaskAssignment {
                        agent_name: agents[i % agents.len()].name.clone(),
                        subtask: Subtask { units },
                        seed: env.assignment_seed(i),
                    })
                    .collect(),
            )
        }
        ActionToken::Finish => Action::Finish(env.collected_answer()),
    }
}

/// Anything that picks the next token given the current state. `u` is the
/// uniform draw reserved for this token.
pub trait Policy: Sync {
    fn act(&self, features: &[f64], env: &Environment, u: f64) -> (ActionToken, f64);

    /// Identifier of the parameters generating the behavior.
    fn snapshot_id(&self) -> String;
}

pub struct LinearPolicy<'a> {
    params: &'a PolicyParams,
    vocab: &'a Vocabulary,
    snapshot: String,
}

impl<'a> LinearPolicy<'a> {
    pub fn new(params: &'a PolicyParams, vocab: &'a Vocabulary) -> Result<Self> {
        params.validate()?;
        if params.n_actions != vocab.len() {
            return Err(Error::DimensionMismatch { expected: vocab.len(), actual: params.n_actions });
        }
        if params.n_features != FEATURE_DIM {
            return Err(Error::DimensionMismatch { expected: FEATURE_DIM, actual: params.n_features });
        }
        Ok(LinearPolicy { params, vocab, snapshot: params.snapshot_id() })
    }
}

impl Policy for LinearPolicy<'_> {
    fn act(&self, features: &[f64], _env: &Environment, u: f64) -> (ActionToken, f64) {
        let dist = action_distribution(self.params, features).expect("dimensions checked in LinearPolicy::new");
        let (i, logprob) = sample_action(&dist, u);
        (self.vocab.tokens[i].clone(), logprob)
    }

    fn snapshot_id(&self) -> String {
        self.snapshot.clone()
    }
}

/// Single agent that works through the units one tool call at a time.
#[derive(Debug, Clone, Default)]
pub struct SerialPolicy;

impl Policy for SerialPolicy {
    fn act(&self, _features: &[f64], env: &Environment, _u: f64) -> (ActionToken, f64) {
        let token = if env.unresolved_units().is_empty() {
            ActionToken::Finish
        } else {
            ActionToken::InvokeTool { tool: env.task().kind.work_tool() }
        };
        (token, 0.0)
    }

    fn snapshot_id(&self) -> String {
        "scripted-serial".into()
    }
}

/// Creates one agent, fans the remaining work out to `k` sub-agents for up
/// to `rounds` groups, then finishes.
#[derive(Debug, Clone)]
pub struct SwarmPolicy {
    pub template: String,
    pub k: u32,
    pub scheme: PartitionScheme,
    pub rounds: u32,
}

impl SwarmPolicy {
    pub fn new(k: u32) -> Self {
        SwarmPolicy { template: "searcher".into(), k, scheme: PartitionScheme::SizeBalanced, rounds: 1 }
    }
}

impl Policy for SwarmPolicy {
    fn act(&self, _features: &[f64], env: &Environment, _u: f64) -> (ActionToken, f64) {
        let groups = env.stages().iter().filter(|s| s.assigned > 0).count() as u32;
        let token = if env.agents().is_empty() {
            ActionToken::CreateAgent { template: self.template.clone() }
        } else if !env.unresolved_units().is_empty() && groups < self.rounds {
            ActionToken::AssignGroup { k: self.k, scheme: self.scheme }
        } else {
            ActionToken::Finish
        };
        (token, 0.0)
    }

    fn snapshot_id(&self) -> String {
        format!("scripted-swarm-k{}-r{}-{}-{}", self.k, self.rounds, self.scheme.as_str(), self.template)
    }
}

/// Rebuilds a scripted policy from its snapshot id.
pub fn scripted_policy(snapshot_id: &str) -> Option<Box<dyn Policy>> {
    if snapshot_id == "scripted-serial" {
        return Some(Box::new(SerialPolicy));
    }
    let rest = snapshot_id.strip_prefix("scripted-swarm-k")?;
    let mut parts = rest.splitn(4, '-');
    let k = parts.next()?.parse().ok()?;
    let rounds = parts.next()?.strip_prefix('r')?.parse().ok()?;
    let scheme = PartitionScheme::parse(parts.next()?)?;
    let template = parts.next()?.to_string();
    Some(Box::new(SwarmPolicy { template, k, scheme, rounds }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub token: ActionToken,
    /// log π_old of the token, recorded when it was sampled.
    pub behavior_logprob: f64,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub task_id: String,
    pub seed: u64,
    pub snapshot_id: String,
    pub tokens: Vec<TokenRecord>,
    pub stages: Vec<StageRecord>,
    pub final_answer: Answer,
    pub reward: Option<RewardBreakdown>,
    pub terminal_flag: TerminalFlag,
    /// Set when the episode was resumed under different parameters.
    pub partial_rollout: bool,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

const SAMPLE_SALT: u64 = 0x706f_6c69_6379;

/// Uniform draw for the `index`-th token of an episode.
pub fn token_uniform(seed: u64, index: usize) -> f64 {
    unit_f64(derive_seed(&[seed, SAMPLE_SALT, index as u64]))
}

/// Step-wise episode driver; supports stopping and continuing later.
#[derive(Debug, Clone)]
pub struct EpisodeRunner {
    env: Environment,
    tokens: Vec<TokenRecord>,
    snapshot_id: String,
    partial_rollout: bool,
}

impl EpisodeRunner {
    pub fn start(task: Arc<TaskSpec>, seed: u64, settings: Arc<EnvSettings>) -> Result<Self> {
        let (env, _) = Environment::reset_with(task, seed, settings)?;
        Ok(EpisodeRunner { env, tokens: vec![], snapshot_id: String::new(), partial_rollout: false })
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn tokens(&self) -> &[TokenRecord] {
        &self.tokens
    }

    pub fn is_done(&self) -> bool {
        self.env.is_done()
    }

    pub fn snapshot_id(&self) -> &str {
        &self.snapshot_id
    }

    pub fn mark_partial(&mut self) {
        self.partial_rollout = true;
    }

    /// Emits one token. Returns whether the episode is over.
    pub fn advance(&mut self, policy: &dyn Policy) -> bool {
        if self.env.is_done() {
            return true;
        }
        if self.tokens.len() >= self.env.task().limits.max_tokens as usize {
            self.env.force_terminate(TerminalFlag::TokenCap);
            return true;
        }
        let sid = policy.snapshot_id();
        if self.snapshot_id.is_empty() {
            self.snapshot_id = sid;
        } else if self.snapshot_id != sid {
            self.partial_rollout = true;
            self.snapshot_id = sid;
        }
        let obs = self.env.observation();
        let features = featurize(&obs, self.env.task());
        let u = token_uniform(self.env.seed(), self.tokens.len());
        let (token, behavior_logprob) = policy.act(&features, &self.env, u);
        let action = decode_action(&token, &self.env);
        self.tokens.push(TokenRecord { token, behavior_logprob, features });
        self.env.step(action).expect("episode checked not done").done
    }

    /// Re-applies a previously recorded token, keeping its recorded
    /// log-probability.
    pub fn replay_token(&mut self, record: TokenRecord, snapshot_id: &str) -> Result<()> {
        if self.env.is_done() {
            return Err(Error::EpisodeDone);
        }
        let action = decode_action(&record.token, &self.env);
        self.tokens.push(record);
        self.snapshot_id = snapshot_id.to_string();
        self.env.step(action)?;
        Ok(())
    }

    /// Runs until done or until `max_stages` stages exist.
    pub fn run_until(&mut self, policy: &dyn Policy, max_stages: usize) {
        while !self.env.is_done() && self.env.stages().len() < max_stages {
            self.advance(policy);
        }
    }

    pub fn finish(mut self, policy: &dyn Policy) -> EpisodeTrace {
        while !self.advance(policy) {}
        self.into_trace()
    }

    fn into_trace(self) -> EpisodeTrace {
        let task_id = self.env.task().task_id.clone();
        EpisodeTrace {
            task_id,
            seed: self.env.seed(),
            snapshot_id: self.snapshot_id,
            tokens: self.tokens,
            stages: self.env.stages().to_vec(),
            final_answer: self.env.final_answer().cloned().unwrap_or(Answer::None),
            reward: None,
            terminal_flag: self.env.terminal().expect("finished episode has a terminal flag"),
            partial_rollout: self.partial_rollout,
        }
    }
}

pub fn rollout_episode(
    policy: &dyn Policy,
    task: Arc<TaskSpec>,
    seed: u64,
    settings: Arc<EnvSettings>,
) -> Result<EpisodeTrace> {
    Ok(EpisodeRunner::start(task, seed, settings)?.finish(policy))
}
