//! Outcome rewards, the composite parallel-agent reward with annealed
//! auxiliary terms, and the Toggle budget-alternation transform.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::environment::Answer;
use crate::error::{Error, Result};
use crate::metrics::{finish_rate, parallelism_degree, ParallelismStats};
use crate::orchestrator::EpisodeTrace;
use crate::task_gen::{GroundTruth, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PARLConfig {
    pub lambda1_init: f64,
    pub lambda2_init: f64,
    pub anneal_horizon: u64,
    pub parallel_cap: u32,
    #[serde(default = "yes")]
    pub anneal_lambda1: bool,
    #[serde(default = "yes")]
    pub anneal_lambda2: bool,
}

fn yes() -> bool {
    true
}

impl Default for PARLConfig {
    fn default() -> Self {
        PARLConfig {
            lambda1_init: 0.5,
            lambda2_init: 0.5,
            anneal_horizon: 300,
            parallel_cap: 8,
            anneal_lambda1: true,
            anneal_lambda2: true,
        }
    }
}

impl PARLConfig {
    pub fn validate(&self) -> Result<()> {
        if self.anneal_horizon == 0 {
            return Err(Error::Config("anneal_horizon must be >= 1".into()));
        }
        if self.parallel_cap == 0 {
            return Err(Error::Config("parallel_cap must be >= 1".into()));
        }
        if !(self.lambda1_init >= 0.0 && self.lambda2_init >= 0.0) {
            return Err(Error::Config("lambda coefficients must be >= 0".into()));
        }
        Ok(())
    }

    /// (λ1, λ2) in effect at iteration `t`.
    pub fn lambdas_at(&self, t: u64) -> (f64, f64) {
        let l1 = if self.anneal_lambda1 { anneal(self.lambda1_init, t, self.anneal_horizon) } else { self.lambda1_init };
        let l2 = if self.anneal_lambda2 { anneal(self.lambda2_init, t, self.anneal_horizon) } else { self.lambda2_init };
        (l1, l2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_perf: f64,
    pub r_parallel: f64,
    pub r_finish: f64,
    pub lambda1_t: f64,
    pub lambda2_t: f64,
    pub composite: f64,
}

impl RewardBreakdown {
    pub fn new(r_perf: f64, r_parallel: f64, r_finish: f64, lambda1_t: f64, lambda2_t: f64) -> Self {
        RewardBreakdown {
            r_perf,
            r_parallel,
            r_finish,
            lambda1_t,
            lambda2_t,
            composite: lambda1_t * r_parallel + lambda2_t * r_finish + r_perf,
        }
    }
}

/// Harmonic mean of precision and recall over exact matches.
pub fn item_f1<T: Ord>(predicted: &BTreeSet<T>, truth: &BTreeSet<T>) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    let hits = predicted.intersection(truth).count();
    if hits == 0 {
        return Ok(0.0);
    }
    let precision = hits as f64 / predicted.len() as f64;
    let recall = hits as f64 / truth.len() as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Task-level outcome score of a submitted answer.
pub fn r_perf_answer(task: &TaskSpec, answer: &Answer) -> f64 {
    match (&task.ground_truth, answer) {
        (GroundTruth::WideSearch { items }, Answer::Items(pred)) => {
            let truth: BTreeSet<(&str, &str)> = items.iter().map(|i| (i.key.as_str(), i.value.as_str())).collect();
            let pred: BTreeSet<(&str, &str)> = pred.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
            item_f1(&pred, &truth).unwrap_or(0.0)
        }
        (GroundTruth::DeepSearch { answer: truth, .. }, Answer::Aggregate(a)) => {
            if a == truth {
                1.0
            } else {
                0.0
            }
        }
        (GroundTruth::BatchDownload { files }, Answer::Files(got)) => {
            let got: BTreeSet<&str> = got.iter().map(String::as_str).collect();
            let acquired = files.iter().filter(|f| got.contains(f.id.as_str())).count();
            acquired as f64 / files.len() as f64
        }
        _ => 0.0,
    }
}

pub fn r_perf(task: &TaskSpec, trace: &EpisodeTrace) -> f64 {
    r_perf_answer(task, &trace.final_answer)
}

pub fn r_parallel(stats: &ParallelismStats, cfg: &PARLConfig) -> f64 {
    stats.max_width.min(cfg.parallel_cap) as f64 / cfg.parallel_cap as f64
}

/// Linear decay from `lambda_init` at t = 0 to zero at t = horizon.
pub fn anneal(lambda_init: f64, t: u64, horizon: u64) -> f64 {
    lambda_init * (1.0 - t as f64 / horizon as f64).max(0.0)
}

pub fn parl_reward(task: &TaskSpec, trace: &EpisodeTrace, cfg: &PARLConfig, t: u64) -> RewardBreakdown {
    let (l1, l2) = cfg.lambdas_at(t);
    let stats = parallelism_degree(&trace.stages);
    RewardBreakdown::new(r_perf(task, trace), r_parallel(&stats, cfg), finish_rate(&trace.stages), l1, l2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToggleConfig {
    pub accuracy_threshold: f64,
    pub m: u64,
    pub rho: f64,
    pub fallback_budget: u32,
}

impl Default for ToggleConfig {
    fn default() -> Self {
        ToggleConfig { accuracy_threshold: 0.5, m: 10, rho: 50.0, fallback_budget: 16 }
    }
}

impl ToggleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("toggle m must be >= 1".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 100.0) {
            return Err(Error::Config("toggle rho must lie in (0, 100]".into()));
        }
        if !(0.0..=1.0).contains(&self.accuracy_threshold) {
            return Err(Error::Config("accuracy threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Budget-limited.
    Phase0,
    /// Unconstrained scaling.
    Phase1,
}

pub fn toggle_phase(t: u64, m: u64) -> Phase {
    if (t / m).is_multiple_of(2) {
        Phase::Phase0
    } else {
        Phase::Phase1
    }
}

fn is_correct(reward: f64) -> bool {
    (reward - 1.0).abs() < 1e-9
}

/// Nearest-rank ρ-th percentile of the lengths of correct responses.
pub fn estimate_budget(responses: &[(u32, f64)], rho: f64, fallback: u32) -> u32 {
    let mut lengths: Vec<u32> = responses.iter().filter(|(_, r)| is_correct(*r)).map(|(l, _)| *l).collect();
    if lengths.is_empty() {
        return fallback;
    }
    lengths.sort_unstable();
    let rank = ((rho / 100.0) * lengths.len() as f64).ceil() as usize;
    lengths[rank.clamp(1, lengths.len()) - 1]
}

/// Per-problem token budgets, written once and then frozen.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetTable {
    entries: BTreeMap<String, u32>,
    frozen: bool,
}

impl BudgetTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, task_id: impl Into<String>, budget: u32) -> Result<()> {
        if self.frozen {
            return Err(Error::BudgetFrozen);
        }
        self.entries.insert(task_id.into(), budget);
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn get(&self, task_id: &str) -> Option<u32> {
        self.entries.get(task_id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Applies the Toggle rule to the K (length, reward) pairs of one problem.
pub fn toggle_reward(
    task_id: &str,
    responses: &[(u32, f64)],
    budgets: &BudgetTable,
    cfg: &ToggleConfig,
    t: u64,
) -> Result<Vec<f64>> {
    if !budgets.is_frozen() {
        return Err(Error::BudgetNotFrozen);
    }
    let budget = budgets.get(task_id).ok_or_else(|| Error::MissingBudget(task_id.to_string()))?;
    let rewards = responses.iter().map(|(_, r)| *r);
    if responses.is_empty() || toggle_phase(t, cfg.m) == Phase::Phase1 {
        return Ok(rewards.collect());
    }
    let mean = responses.iter().map(|(_, r)| r).sum::<f64>() / responses.len() as f64;
    if mean < cfg.accuracy_threshold {
        return Ok(rewards.collect());
    }
    Ok(responses.iter().map(|&(len, r)| if len <= budget { r } else { 0.0 }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvSettings, TerminalFlag};
    use crate::metrics::StageRecord;
    use crate::task_gen::{gen_batch_download, gen_deep_search, gen_wide_search};
    use proptest::prelude::*;

    fn set(xs: &[&'static str]) -> BTreeSet<&'static str> {
        xs.iter().copied().collect()
    }

    fn trace(answer: Answer, stages: Vec<StageRecord>) -> EpisodeTrace {
        EpisodeTrace {
            task_id: "t".into(),
            seed: 0,
            snapshot_id: String::new(),
            tokens: vec![],
            stages,
            final_answer: answer,
            reward: None,
            terminal_flag: TerminalFlag::Finished,
            partial_rollout: false,
        }
    }

    #[test]
    fn f1_examples() {
        assert_eq!(item_f1(&set(&["a", "b"]), &set(&["a", "b"])).unwrap(), 1.0);
        let f = item_f1(&set(&["a", "b", "c"]), &set(&["b", "c", "d"])).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(item_f1(&set(&[]), &set(&["a"])).unwrap(), 0.0);
        assert!(matches!(item_f1(&set(&["a"]), &set(&[])), Err(Error::EmptyTruth)));
    }

    #[test]
    fn r_perf_by_family() {
        let deep = gen_deep_search(1, 2, 2).unwrap();
        let GroundTruth::DeepSearch { answer, .. } = &deep.ground_truth else { unreachable!() };
        assert_eq!(r_perf(&deep, &trace(Answer::Aggregate(answer.clone()), vec![])), 1.0);
        assert_eq!(r_perf(&deep, &trace(Answer::Aggregate("nope".into()), vec![])), 0.0);

        let batch = gen_batch_download(1, 8, 3).unwrap();
        let GroundTruth::BatchDownload { files } = &batch.ground_truth else { unreachable!() };
        let six = files.iter().take(6).map(|f| f.id.clone()).collect();
        assert_eq!(r_perf(&batch, &trace(Answer::Files(six), vec![])), 0.75);

        let wide = gen_wide_search(1, 10, 1).unwrap();
        let GroundTruth::WideSearch { items } = &wide.ground_truth else { unreachable!() };
        let half = items.iter().take(5).map(|i| (i.key.clone(), i.value.clone())).collect();
        // precision 1, recall 1/2
        let expected = 2.0 * 1.0 * 0.5 / (1.0 + 0.5);
        assert!((r_perf(&wide, &trace(Answer::Items(half), vec![])) - expected).abs() < 1e-15);
        // Wrong value for a right key is not a match.
        let wrong = [(items[0].key.clone(), "x".to_string())].into_iter().collect();
        assert_eq!(r_perf(&wide, &trace(Answer::Items(wrong), vec![])), 0.0);
    }

    #[test]
    fn r_parallel_examples() {
        let cfg = PARLConfig { parallel_cap: 8, ..PARLConfig::default() };
        let stats = |w| ParallelismStats { max_width: w, mean_width: 0.0, episodes_with_zero_spawn: w == 0 };
        assert_eq!(r_parallel(&stats(0), &cfg), 0.0);
        assert_eq!(r_parallel(&stats(8), &cfg), 1.0);
        assert_eq!(r_parallel(&stats(20), &cfg), 1.0);
    }

    #[test]
    fn anneal_schedule() {
        assert_eq!(anneal(0.8, 0, 100), 0.8);
        assert_eq!(anneal(0.8, 100, 100), 0.0);
        assert_eq!(anneal(0.8, 50, 100), 0.4);
        assert_eq!(anneal(0.8, 500, 100), 0.0);
    }

    #[test]
    fn composite_arithmetic() {
        let b = RewardBreakdown::new(0.6, 1.0, 1.0, 0.5, 0.3);
        assert!((b.composite - 1.4).abs() < 1e-15);
        let b = RewardBreakdown::new(0.6, 1.0, 1.0, 0.0, 0.0);
        assert_eq!(b.composite, 0.6);
    }

    #[test]
    fn parl_reward_after_horizon_is_r_perf() {
        let task = gen_wide_search(1, 4, 1).unwrap();
        let cfg = PARLConfig { lambda1_init: 0.7, lambda2_init: 0.4, anneal_horizon: 10, ..PARLConfig::default() };
        let tr = trace(Answer::Items(BTreeMap::new()), vec![StageRecord::group(0, vec![1, 1, 1], 3)]);
        let early = parl_reward(&task, &tr, &cfg, 0);
        assert!(early.composite > early.r_perf);
        for t in [10, 11, 1000] {
            let late = parl_reward(&task, &tr, &cfg, t);
            assert_eq!(late.composite, late.r_perf);
        }
        let fixed = PARLConfig { anneal_lambda1: false, ..cfg };
        assert_eq!(fixed.lambdas_at(1000), (0.7, 0.0));
    }

    #[test]
    fn budget_estimation() {
        let correct = |ls: &[u32]| ls.iter().map(|&l| (l, 1.0)).collect::<Vec<_>>();
        assert_eq!(estimate_budget(&correct(&[10, 20, 30, 40]), 50.0, 99), 20);
        assert_eq!(estimate_budget(&correct(&[40, 10, 30, 20]), 50.0, 99), 20);
        assert_eq!(estimate_budget(&[(5, 0.0), (7, 0.5)], 50.0, 99), 99);
        for rho in [1.0, 33.0, 50.0, 100.0] {
            assert_eq!(estimate_budget(&correct(&[12, 12, 12]), rho, 0), 12);
        }
        // Incorrect responses are ignored.
        assert_eq!(estimate_budget(&[(1, 0.0), (50, 1.0)], 10.0, 0), 50);
    }

    #[test]
    fn toggle_phases() {
        assert_eq!(toggle_phase(0, 5), Phase::Phase0);
        assert_eq!(toggle_phase(4, 5), Phase::Phase0);
        assert_eq!(toggle_phase(5, 5), Phase::Phase1);
        assert_eq!(toggle_phase(10, 5), Phase::Phase0);
    }

    fn frozen(budget: u32) -> BudgetTable {
        let mut b = BudgetTable::new();
        b.insert("x", budget).unwrap();
        b.freeze();
        b
    }

    #[test]
    fn budget_table_freezes() {
        let mut b = frozen(3);
        assert!(matches!(b.insert("y", 4), Err(Error::BudgetFrozen)));
        assert_eq!(b.get("x"), Some(3));
        let cfg = ToggleConfig::default();
        assert!(matches!(toggle_reward("y", &[(1, 1.0)], &b, &cfg, 0), Err(Error::MissingBudget(_))));
        let open = BudgetTable::new();
        assert!(matches!(toggle_reward("x", &[(1, 1.0)], &open, &cfg, 0), Err(Error::BudgetNotFrozen)));
    }

    #[test]
    fn toggle_rule() {
        let cfg = ToggleConfig { accuracy_threshold: 0.5, m: 5, rho: 50.0, fallback_budget: 10 };
        let b = frozen(20);
        let resp = [(10, 1.0), (25, 1.0)];
        assert_eq!(toggle_reward("x", &resp, &b, &cfg, 0).unwrap(), vec![1.0, 0.0]);
        assert_eq!(toggle_reward("x", &resp, &b, &cfg, 5).unwrap(), vec![1.0, 1.0]);
        let weak = [(10, 0.8), (25, 0.0)];
        assert_eq!(toggle_reward("x", &weak, &b, &cfg, 0).unwrap(), vec![0.8, 0.0]);
        let weak = [(30, 0.8), (25, 0.0)];
        assert_eq!(toggle_reward("x", &weak, &b, &cfg, 0).unwrap(), vec![0.8, 0.0]);
    }

    proptest! {
        #[test]
        fn toggle_never_increases(
            resp in proptest::collection::vec((1u32..60, 0.0f64..=1.0), 1..10),
            t in 0u64..40,
            budget in 1u32..60,
            threshold in 0.0f64..=1.0,
        ) {
            let cfg = ToggleConfig { accuracy_threshold: threshold, m: 3, rho: 50.0, fallback_budget: 1 };
            let out = toggle_reward("x", &resp, &frozen(budget), &cfg, t).unwrap();
            let mean = resp.iter().map(|r| r.1).sum::<f64>() / resp.len() as f64;
            for ((_, r), o) in resp.iter().zip(&out) {
                prop_assert!(*o <= *r);
                if toggle_phase(t, 3) == Phase::Phase1 || mean < threshold {
                    prop_assert_eq!(*o, *r);
                }
            }
        }

        #[test]
        fn budget_is_order_invariant(
            mut resp in proptest::collection::vec((1u32..100, prop_oneof![Just(0.0), Just(0.5), Just(1.0)]), 1..12),
            rho in 1.0f64..=100.0,
        ) {
            let a = estimate_budget(&resp, rho, 7);
            resp.reverse();
            prop_assert_eq!(a, estimate_budget(&resp, rho, 7));
            let correct: Vec<u32> = resp.iter().filter(|r| r.1 == 1.0).map(|r| r.0).collect();
            if !correct.is_empty() {
                prop_assert!(correct.contains(&a));
            }
        }

        #[test]
        fn composite_is_linear_in_auxiliary_terms(
            perf in 0.0f64..=1.0, par in 0.0f64..=1.0, fin in 0.0f64..=1.0,
            l1 in 0.0f64..2.0, l2 in 0.0f64..2.0,
        ) {
            let b = RewardBreakdown::new(perf, par, fin, l1, l2);
            prop_assert_eq!(b.composite, l1 * par + l2 * fin + perf);
        }
    }

    #[test]
    fn settings_default_is_valid() {
        EnvSettings::default().validate().unwrap();
    }
}
