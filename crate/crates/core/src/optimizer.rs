//! Policy optimization with group-mean baselines and token-level gradient
//! masking on the train/behavior log-ratio.
//!
//! Per problem x with K responses and N tokens in total, the maximized
//! objective is
//!
//! ```text
//! J(θ) = 1/N Σ_j Σ_i [ m_ji · ρ_ji · (r_j − r̄) − τ · (log ρ_ji)² ]
//! ρ_ji = π_θ(y_ji) / π_old(y_ji),   m_ji = 1{α ≤ log ρ_ji ≤ β}
//! ```
//!
//! averaged over the problems of a batch. The mask is a constant under
//! differentiation, so tokens outside [α, β] contribute nothing through the
//! advantage term whatever the sign of the advantage.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::environment::EnvSettings;
use crate::error::{Error, Result};
use crate::harness::manager::{rollout_manager, EpisodeJob};
use crate::metrics::{critical_steps, finish_rate, parallelism_degree};
use crate::orchestrator::{EpisodeTrace, LinearPolicy, PolicyParams, Vocabulary};
use crate::rewards::{parl_reward, toggle_phase, toggle_reward, BudgetTable, PARLConfig, Phase, ToggleConfig};
use crate::rng::derive_seed;
use crate::task_gen::TaskSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RLConfig {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    /// Rollouts per problem.
    pub k: usize,
    pub learning_rate: f64,
    pub batch_problems: usize,
    pub iterations: u64,
}

impl Default for RLConfig {
    fn default() -> Self {
        RLConfig {
            alpha: -0.5,
            beta: 0.5,
            tau: 0.01,
            k: 8,
            learning_rate: 1.0,
            batch_problems: 8,
            iterations: 500,
        }
    }
}

impl RLConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha < 0.0 && 0.0 < self.beta) {
            return Err(Error::Config("log-ratio bounds must satisfy alpha < 0 < beta".into()));
        }
        if self.tau.is_nan() || self.tau < 0.0 {
            return Err(Error::Config("tau must be >= 0".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if self.k == 0 || self.batch_problems == 0 {
            return Err(Error::Config("k and batch_problems must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchToken {
    pub features: Vec<f64>,
    pub action: usize,
    pub behavior_logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub reward: f64,
    pub tokens: Vec<BatchToken>,
}

/// The K responses sampled for one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemGroup {
    pub task_id: String,
    pub responses: Vec<Response>,
}

impl ProblemGroup {
    pub fn n_tokens(&self) -> usize {
        self.responses.iter().map(|r| r.tokens.len()).sum()
    }

    pub fn mean_reward(&self) -> f64 {
        self.responses.iter().map(|r| r.reward).sum::<f64>() / self.responses.len() as f64
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.responses.iter().map(|r| r.reward).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutBatch {
    pub groups: Vec<ProblemGroup>,
}

impl RolloutBatch {
    /// Builds a group from traces and their (possibly transformed) rewards.
    pub fn group_from_traces(
        task_id: &str,
        traces: &[EpisodeTrace],
        rewards: &[f64],
        vocab: &Vocabulary,
    ) -> Result<ProblemGroup> {
        if traces.len() != rewards.len() {
            return Err(Error::DimensionMismatch { expected: traces.len(), actual: rewards.len() });
        }
        let responses = traces
            .iter()
            .zip(rewards)
            .map(|(trace, &reward)| {
                let tokens = trace
                    .tokens
                    .iter()
                    .map(|t| {
                        let action = vocab
                            .index_of(&t.token)
                            .ok_or_else(|| Error::invalid_param(format!("token {:?} not in vocabulary", t.token)))?;
                        Ok(BatchToken { features: t.features.clone(), action, behavior_logprob: t.behavior_logprob })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Response { reward, tokens })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProblemGroup { task_id: task_id.to_string(), responses })
    }

    pub fn n_tokens(&self) -> usize {
        self.groups.iter().map(ProblemGroup::n_tokens).sum()
    }

    pub fn advantages(&self) -> Vec<Vec<f64>> {
        self.groups.iter().map(|g| advantage(&g.rewards())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub analytic: Vec<f64>,
    pub finite_diff: Vec<f64>,
    pub max_rel_error: f64,
}

/// Rewards centered on their group mean.
pub fn advantage(rewards: &[f64]) -> Vec<f64> {
    if rewards.is_empty() {
        return vec![];
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    rewards.iter().map(|r| r - mean).collect()
}

/// 1 when the log-ratio lies in [alpha, beta]. Independent of the advantage.
pub fn clip_mask(log_ratio: f64, alpha: f64, beta: f64) -> f64 {
    if (alpha..=beta).contains(&log_ratio) {
        1.0
    } else {
        0.0
    }
}

fn check_shapes(params: &PolicyParams, batch: &RolloutBatch, advantages: &[Vec<f64>]) -> Result<()> {
    params.validate()?;
    if batch.n_tokens() == 0 {
        return Err(Error::EmptyBatch);
    }
    if advantages.len() != batch.groups.len() {
        return Err(Error::DimensionMismatch { expected: batch.groups.len(), actual: advantages.len() });
    }
    for (g, adv) in batch.groups.iter().zip(advantages) {
        if adv.len() != g.responses.len() {
            return Err(Error::DimensionMismatch { expected: g.responses.len(), actual: adv.len() });
        }
        for t in g.responses.iter().flat_map(|r| &r.tokens) {
            if t.features.len() != params.n_features {
                return Err(Error::DimensionMismatch { expected: params.n_features, actual: t.features.len() });
            }
            if t.action >= params.n_actions {
                return Err(Error::DimensionMismatch { expected: params.n_actions, actual: t.action + 1 });
            }
        }
    }
    Ok(())
}

/// Iterates (group weight 1/(G·N_x), advantage, token) over every token.
fn for_each_token(
    batch: &RolloutBatch,
    advantages: &[Vec<f64>],
    mut f: impl FnMut(f64, f64, &BatchToken) -> Result<()>,
) -> Result<()> {
    let live = batch.groups.iter().filter(|g| g.n_tokens() > 0).count() as f64;
    for (g, adv) in batch.groups.iter().zip(advantages) {
        let n = g.n_tokens();
        if n == 0 {
            continue;
        }
        let weight = 1.0 / (live * n as f64);
        for (resp, &a) in g.responses.iter().zip(adv) {
            for tok in &resp.tokens {
                f(weight, a, tok)?;
            }
        }
    }
    Ok(())
}

/// Objective with caller-supplied advantages (one vector per group).
pub fn rl_objective_with_advantages(
    params: &PolicyParams,
    batch: &RolloutBatch,
    advantages: &[Vec<f64>],
    cfg: &RLConfig,
) -> Result<f64> {
    check_shapes(params, batch, advantages)?;
    let mut total = 0.0;
    for_each_token(batch, advantages, |w, a, tok| {
        let log_ratio = params.log_probs(&tok.features)?[tok.action] - tok.behavior_logprob;
        let mask = clip_mask(log_ratio, cfg.alpha, cfg.beta);
        total += w * (mask * log_ratio.exp() * a - cfg.tau * log_ratio * log_ratio);
        Ok(())
    })?;
    Ok(total)
}

pub fn rl_objective(params: &PolicyParams, batch: &RolloutBatch, cfg: &RLConfig) -> Result<f64> {
    rl_objective_with_advantages(params, batch, &batch.advantages(), cfg)
}

/// The penalty part of the objective alone, −τ/N Σ (log ρ)².
pub fn penalty_term(params: &PolicyParams, batch: &RolloutBatch, cfg: &RLConfig) -> Result<f64> {
    let zero: Vec<Vec<f64>> = batch.groups.iter().map(|g| vec![0.0; g.responses.len()]).collect();
    rl_objective_with_advantages(params, batch, &zero, cfg)
}

pub fn rl_gradient_with_advantages(
    params: &PolicyParams,
    batch: &RolloutBatch,
    advantages: &[Vec<f64>],
    cfg: &RLConfig,
) -> Result<Vec<f64>> {
    check_shapes(params, batch, advantages)?;
    let mut grad = vec![0.0; params.dim()];
    for_each_token(batch, advantages, |w, a, tok| {
        let log_ratio = params.log_probs(&tok.features)?[tok.action] - tok.behavior_logprob;
        let mask = clip_mask(log_ratio, cfg.alpha, cfg.beta);
        // d/dθ of ρ·A is ρ·A·∇log π; of −τ(log ρ)² is −2τ·log ρ·∇log π.
        let coeff = mask * log_ratio.exp() * a - 2.0 * cfg.tau * log_ratio;
        if coeff != 0.0 {
            params.accumulate_grad_log_prob(&tok.features, tok.action, w * coeff, &mut grad)?;
        }
        Ok(())
    })?;
    Ok(grad)
}

pub fn rl_gradient(params: &PolicyParams, batch: &RolloutBatch, cfg: &RLConfig) -> Result<Vec<f64>> {
    rl_gradient_with_advantages(params, batch, &batch.advantages(), cfg)
}

/// Relative error with a small absolute floor so exactly-zero coordinates
/// compare by absolute difference.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central finite differences of the objective, coordinate by coordinate.
pub fn fd_check(params: &PolicyParams, batch: &RolloutBatch, cfg: &RLConfig, epsilon: f64) -> Result<GradientReport> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid_param("epsilon must be > 0"));
    }
    let analytic = rl_gradient(params, batch, cfg)?;
    let mut probe = params.clone();
    let mut finite_diff = Vec::with_capacity(params.dim());
    for (i, &w) in params.theta.iter().enumerate() {
        probe.theta[i] = w + epsilon;
        let up = rl_objective(&probe, batch, cfg)?;
        probe.theta[i] = w - epsilon;
        let down = rl_objective(&probe, batch, cfg)?;
        probe.theta[i] = w;
        finite_diff.push((up - down) / (2.0 * epsilon));
    }
    let max_rel_error = analytic
        .iter()
        .zip(&finite_diff)
        .map(|(&a, &f)| relative_error(a, f))
        .fold(0.0, f64::max);
    Ok(GradientReport { analytic, finite_diff, max_rel_error })
}

/// Everything a training iteration needs besides the parameters.
#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub vocab: Vocabulary,
    pub settings: Arc<EnvSettings>,
    pub rl: RLConfig,
    pub parl: PARLConfig,
    pub toggle: Option<(ToggleConfig, Arc<BudgetTable>)>,
    pub concurrency: usize,
    pub run_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u64,
    /// Mean of the rewards the update was computed from.
    pub mean_reward: f64,
    pub mean_r_perf: f64,
    pub mean_critical_steps: f64,
    /// Mean over episodes of the widest group.
    pub mean_parallelism: f64,
    pub mean_tokens: f64,
    pub zero_spawn_fraction: f64,
    pub mean_finish_rate: f64,
    pub assigned: u64,
    pub completed: u64,
    pub phase: Option<Phase>,
}

/// Seed of the `j`-th rollout of the `p`-th problem at iteration `t`.
pub fn rollout_seed(run_seed: u64, t: u64, p: usize, j: usize) -> u64 {
    derive_seed(&[run_seed, t, p as u64, j as u64])
}

/// One iteration: roll out K episodes per problem under the current
/// (behavior) parameters, score them, and take one ascent step.
pub fn train_step(
    params: &PolicyParams,
    problems: &[Arc<TaskSpec>],
    setup: &TrainSetup,
    t: u64,
) -> Result<(PolicyParams, IterationStats)> {
    setup.rl.validate()?;
    let k = setup.rl.k;
    let jobs: Vec<EpisodeJob> = problems
        .iter()
        .enumerate()
        .flat_map(|(p, task)| {
            (0..k).map(move |j| EpisodeJob { task: Arc::clone(task), seed: rollout_seed(setup.run_seed, t, p, j) })
        })
        .collect();
    let policy = LinearPolicy::new(params, &setup.vocab)?;
    let traces = rollout_manager(&jobs, &policy, &setup.settings, setup.concurrency)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut batch = RolloutBatch::default();
    let mut sums = [0.0f64; 7];
    let (mut assigned, mut completed) = (0u64, 0u64);
    for (p, task) in problems.iter().enumerate() {
        let group = &traces[p * k..(p + 1) * k];
        let breakdowns: Vec<_> = group.iter().map(|tr| parl_reward(task, tr, &setup.parl, t)).collect();
        let mut rewards: Vec<f64> = breakdowns.iter().map(|b| b.composite).collect();
        if let Some((cfg, budgets)) = &setup.toggle {
            let pairs: Vec<(u32, f64)> = group.iter().map(|tr| tr.len() as u32).zip(rewards.iter().copied()).collect();
            rewards = toggle_reward(&task.task_id, &pairs, budgets, cfg, t)?;
        }
        for ((tr, b), r) in group.iter().zip(&breakdowns).zip(&rewards) {
            let par = parallelism_degree(&tr.stages);
            sums[0] += r;
            sums[1] += b.r_perf;
            sums[2] += critical_steps(&tr.stages) as f64;
            sums[3] += par.max_width as f64;
            sums[4] += tr.len() as f64;
            sums[5] += if par.episodes_with_zero_spawn { 1.0 } else { 0.0 };
            sums[6] += finish_rate(&tr.stages);
            assigned += tr.stages.iter().map(|s| s.assigned as u64).sum::<u64>();
            completed += tr.stages.iter().map(|s| s.completed as u64).sum::<u64>();
        }
        batch.groups.push(RolloutBatch::group_from_traces(&task.task_id, group, &rewards, &setup.vocab)?);
    }

    let mut next = params.clone();
    if batch.n_tokens() > 0 && setup.rl.learning_rate > 0.0 {
        let grad = rl_gradient(params, &batch, &setup.rl)?;
        for (w, g) in next.theta.iter_mut().zip(grad) {
            *w += setup.rl.learning_rate * g;
        }
    }
    let n = traces.len().max(1) as f64;
    let stats = IterationStats {
        iteration: t,
        mean_reward: sums[0] / n,
        mean_r_perf: sums[1] / n,
        mean_critical_steps: sums[2] / n,
        mean_parallelism: sums[3] / n,
        mean_tokens: sums[4] / n,
        zero_spawn_fraction: sums[5] / n,
        mean_finish_rate: sums[6] / n,
        assigned,
        completed,
        phase: setup.toggle.as_ref().map(|(cfg, _)| toggle_phase(t, cfg.m)),
    };
    Ok((next, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::FEATURE_DIM;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, na: usize, scale: f64) -> PolicyParams {
        let mut p = PolicyParams::zeros(FEATURE_DIM, na);
        p.theta.iter_mut().for_each(|w| *w = rng.gen_range(-scale..scale));
        p
    }

    fn random_features(rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..FEATURE_DIM).map(|i| if i == 0 { 1.0 } else { rng.gen_range(0.0..1.0) }).collect()
    }

    /// Batch whose behavior log-probs are the current ones shifted by `drift`.
    fn batch_with_drift(rng: &mut ChaCha8Rng, params: &PolicyParams, drift: impl Fn(&mut ChaCha8Rng) -> f64) -> RolloutBatch {
        let groups = (0..3)
            .map(|g| ProblemGroup {
                task_id: format!("p{g}"),
                responses: (0..4)
                    .map(|_| {
                        let len = rng.gen_range(1..6);
                        let tokens = (0..len)
                            .map(|_| {
                                let features = random_features(rng);
                                let action = rng.gen_range(0..params.n_actions);
                                let lp = params.log_probs(&features).unwrap()[action];
                                BatchToken { features, action, behavior_logprob: lp - drift(rng) }
                            })
                            .collect();
                        Response { reward: rng.gen_range(0.0..1.5), tokens }
                    })
                    .collect(),
            })
            .collect();
        RolloutBatch { groups }
    }

    fn cfg(tau: f64) -> RLConfig {
        RLConfig { alpha: -0.5, beta: 0.5, tau, ..RLConfig::default() }
    }

    #[test]
    fn advantage_examples() {
        assert_eq!(advantage(&[1.0, 0.0]), vec![0.5, -0.5]);
        assert_eq!(advantage(&[0.3; 4]), vec![0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let r: Vec<f64> = (0..rng.gen_range(1..12)).map(|_| rng.gen_range(-5.0..5.0)).collect();
            assert!(advantage(&r).iter().sum::<f64>().abs() <= 1e-12);
        }
    }

    #[test]
    fn clip_mask_examples() {
        assert_eq!(clip_mask(0.0, -0.5, 0.5), 1.0);
        assert_eq!(clip_mask(0.7, -0.5, 0.5), 0.0);
        assert_eq!(clip_mask(-0.7, -0.5, 0.5), 0.0);
        assert_eq!(clip_mask(0.5, -0.5, 0.5), 1.0);
    }

    #[test]
    fn on_policy_penalty_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(&mut rng, 6, 1.0);
        let batch = batch_with_drift(&mut rng, &p, |_| 0.0);
        assert_eq!(penalty_term(&p, &batch, &cfg(0.7)).unwrap(), 0.0);
        let zero_adv: Vec<Vec<f64>> = batch.groups.iter().map(|g| vec![0.0; g.responses.len()]).collect();
        let g = rl_gradient_with_advantages(&p, &batch, &zero_adv, &cfg(0.7)).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_tau_and_zero_advantage_gives_zero_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(&mut rng, 6, 1.0);
        let mut batch = batch_with_drift(&mut rng, &p, |r| r.gen_range(-0.3..0.3));
        for g in &mut batch.groups {
            for r in &mut g.responses {
                r.reward = 0.25;
            }
        }
        assert_eq!(rl_objective(&p, &batch, &cfg(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn penalty_is_linear_in_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_params(&mut rng, 6, 1.0);
        let batch = batch_with_drift(&mut rng, &p, |r| r.gen_range(-1.0..1.0));
        let one = penalty_term(&p, &batch, &cfg(0.3)).unwrap();
        let two = penalty_term(&p, &batch, &cfg(0.6)).unwrap();
        assert!(one < 0.0);
        assert!((two - 2.0 * one).abs() <= 1e-12 * one.abs());
    }

    #[test]
    fn fully_masked_zero_tau_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_params(&mut rng, 6, 1.0);
        let batch = batch_with_drift(&mut rng, &p, |r| if r.gen() { 2.0 } else { -2.0 });
        let g = rl_gradient(&p, &batch, &cfg(0.0)).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn masked_tokens_ignore_their_advantage() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_params(&mut rng, 6, 1.0);
        let mut batch = batch_with_drift(&mut rng, &p, |r| r.gen_range(-0.3..0.3));
        // Push every token of response (0, 0) outside the interval.
        for t in &mut batch.groups[0].responses[0].tokens {
            t.behavior_logprob -= 3.0;
        }
        let base = batch.advantages();
        let before = rl_gradient_with_advantages(&p, &batch, &base, &cfg(0.1)).unwrap();
        let mut altered = base.clone();
        altered[0][0] = 1234.5;
        let after = rl_gradient_with_advantages(&p, &batch, &altered, &cfg(0.1)).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let p = random_params(&mut rng, 7, 1.5);
            let batch = batch_with_drift(&mut rng, &p, |r| {
                // Stay clear of the mask boundaries.
                let x: f64 = r.gen_range(-1.2..1.2);
                if (x.abs() - 0.5).abs() < 0.01 { x + 0.05 } else { x }
            });
            let report = fd_check(&p, &batch, &cfg(0.2), 1e-6).unwrap();
            assert_eq!(report.analytic.len(), p.dim());
            assert_eq!(report.finite_diff.len(), p.dim());
            assert!(report.max_rel_error <= 1e-4, "{}", report.max_rel_error);
        }
    }

    #[test]
    fn zero_policy_on_policy_fd_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = PolicyParams::zeros(FEATURE_DIM, 5);
        let batch = batch_with_drift(&mut rng, &p, |_| 0.0);
        let report = fd_check(&p, &batch, &cfg(0.5), 1e-6).unwrap();
        assert!(report.max_rel_error <= 1e-6, "{}", report.max_rel_error);
    }

    #[test]
    fn masked_component_agrees_with_finite_differences() {
        // All tokens masked: only the penalty remains, on both routes.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_params(&mut rng, 5, 1.0);
        let batch = batch_with_drift(&mut rng, &p, |r| if r.gen() { 1.5 } else { -1.5 });
        let report = fd_check(&p, &batch, &cfg(0.3), 1e-6).unwrap();
        assert!(report.max_rel_error <= 1e-4);
        let penalty_only = rl_gradient_with_advantages(
            &p,
            &batch,
            &batch.groups.iter().map(|g| vec![0.0; g.responses.len()]).collect::<Vec<_>>(),
            &cfg(0.3),
        )
        .unwrap();
        for (a, b) in report.analytic.iter().zip(&penalty_only) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn reward_scaling_scales_advantage_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_params(&mut rng, 5, 1.0);
        let batch = batch_with_drift(&mut rng, &p, |r| r.gen_range(-0.4..0.4));
        let base = rl_objective(&p, &batch, &cfg(0.0)).unwrap();
        let mut scaled = batch.clone();
        for g in &mut scaled.groups {
            for r in &mut g.responses {
                r.reward *= 3.0;
            }
        }
        let tripled = rl_objective(&p, &scaled, &cfg(0.0)).unwrap();
        assert!((tripled - 3.0 * base).abs() <= 1e-12);
    }

    #[test]
    fn empty_batch_and_bad_dims() {
        let p = PolicyParams::zeros(FEATURE_DIM, 3);
        assert!(matches!(rl_objective(&p, &RolloutBatch::default(), &cfg(0.1)), Err(Error::EmptyBatch)));
        let batch = RolloutBatch {
            groups: vec![ProblemGroup {
                task_id: "x".into(),
                responses: vec![Response {
                    reward: 1.0,
                    tokens: vec![BatchToken { features: vec![1.0; 3], action: 0, behavior_logprob: 0.0 }],
                }],
            }],
        };
        assert!(matches!(rl_gradient(&p, &batch, &cfg(0.1)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn config_rejects_positive_alpha() {
        let bad = RLConfig { alpha: 0.1, beta: 0.5, ..RLConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        RLConfig::default().validate().unwrap();
    }
}
