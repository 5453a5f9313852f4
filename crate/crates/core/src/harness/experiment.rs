//! Training and evaluation driver: fixed task pools, checkpointed training,
//! post-training evaluation and the serial-vs-swarm speedup table.

use rand::seq::index;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::environment::EnvSettings;
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Mode, PolicySpec};
use crate::harness::manager::{rollout_manager, EpisodeJob};
use crate::harness::trace::{write_jsonl, SnapshotStore, TraceRecord};
use crate::metrics::{
    context_usage, critical_steps, finish_rate, parallelism_degree, total_steps, write_metrics_csv, StageAction,
};
use crate::optimizer::{train_step, IterationStats, TrainSetup};
use crate::orchestrator::{
    EpisodeRunner, EpisodeTrace, LinearPolicy, Policy, PolicyParams, SerialPolicy, SwarmPolicy, Vocabulary,
};
use crate::rewards::{estimate_budget, r_perf, r_perf_answer, BudgetTable, Phase};
use crate::rng::{derive_seed, rng_for};
use crate::task_gen::TaskSpec;

pub const CHECKPOINT_VERSION: u32 = 1;

const POOL_SALT: u64 = 0x706f_6f6c;
const EVAL_SALT: u64 = 0x6576_616c;
const BATCH_SALT: u64 = 0x6261_7463;
const BUDGET_SALT: u64 = 0x6275_6467;

/// Everything needed to continue training at `next_iteration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub next_iteration: u64,
    pub params: PolicyParams,
    pub initial_params: PolicyParams,
    pub vocab: Vocabulary,
    pub budgets: Option<BudgetTable>,
    pub curve: Vec<IterationStats>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("checkpoint version {} is not supported", ckpt.version)));
        }
        Ok(Checkpoint { vocab: ckpt.vocab.reindex()?, ..ckpt })
    }
}

/// The fixed task pool training draws its batches from.
pub fn training_pool(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Arc<TaskSpec>>> {
    cfg.tasks.sample(seed, POOL_SALT, cfg.tasks.count)
}

/// One training run for one seed over a fixed task pool.
pub struct Trainer {
    seed: u64,
    pool: Vec<Arc<TaskSpec>>,
    setup: TrainSetup,
    initial: PolicyParams,
    params: PolicyParams,
    next_iteration: u64,
    iterations: u64,
    batch_problems: usize,
    curve: Vec<IterationStats>,
}

impl Trainer {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let vocab = cfg.vocabulary()?;
        let initial = cfg.initial_params(&vocab);
        let pool = training_pool(cfg, seed)?;
        let settings = Arc::new(cfg.env.clone());
        let budgets = match &cfg.toggle {
            None => None,
            Some(toggle) => Some(initial_budgets(
                &pool,
                &initial,
                &vocab,
                &settings,
                cfg.rl.k,
                seed,
                cfg.concurrency_limit,
                toggle.rho,
                toggle.fallback_budget,
            )?),
        };
        Ok(Self::assemble(cfg, seed, pool, vocab, initial.clone(), initial, budgets, 0, vec![]))
    }

    pub fn resume(cfg: &ExperimentConfig, ckpt: Checkpoint) -> Result<Self> {
        cfg.validate()?;
        let vocab = cfg.vocabulary()?;
        if ckpt.vocab != vocab {
            return Err(Error::Config("checkpoint vocabulary differs from the configured one".into()));
        }
        if !cfg.seeds.contains(&ckpt.seed) {
            return Err(Error::Config(format!("checkpoint seed {} is not in the configured seeds", ckpt.seed)));
        }
        if cfg.toggle.is_some() != ckpt.budgets.is_some() {
            return Err(Error::Config("checkpoint and config disagree on the Toggle budget table".into()));
        }
        ckpt.params.validate()?;
        if ckpt.params.n_actions != vocab.len() {
            return Err(Error::DimensionMismatch { expected: vocab.len(), actual: ckpt.params.n_actions });
        }
        let pool = training_pool(cfg, ckpt.seed)?;
        Ok(Self::assemble(
            cfg,
            ckpt.seed,
            pool,
            vocab,
            ckpt.initial_params,
            ckpt.params,
            ckpt.budgets,
            ckpt.next_iteration,
            ckpt.curve,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        cfg: &ExperimentConfig,
        seed: u64,
        pool: Vec<Arc<TaskSpec>>,
        vocab: Vocabulary,
        initial: PolicyParams,
        params: PolicyParams,
        budgets: Option<BudgetTable>,
        next_iteration: u64,
        curve: Vec<IterationStats>,
    ) -> Self {
        let toggle = cfg.toggle.zip(budgets).map(|(t, b)| (t, Arc::new(b)));
        let setup = TrainSetup {
            vocab,
            settings: Arc::new(cfg.env.clone()),
            rl: cfg.rl,
            parl: cfg.parl,
            toggle,
            concurrency: cfg.concurrency_limit,
            run_seed: seed,
        };
        Trainer {
            seed,
            pool,
            setup,
            initial,
            params,
            next_iteration,
            iterations: cfg.rl.iterations,
            batch_problems: cfg.rl.batch_problems,
            curve,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn initial_params(&self) -> &PolicyParams {
        &self.initial
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.setup.vocab
    }

    pub fn pool(&self) -> &[Arc<TaskSpec>] {
        &self.pool
    }

    pub fn budgets(&self) -> Option<&BudgetTable> {
        self.setup.toggle.as_ref().map(|(_, b)| b.as_ref())
    }

    pub fn curve(&self) -> &[IterationStats] {
        &self.curve
    }

    pub fn next_iteration(&self) -> u64 {
        self.next_iteration
    }

    pub fn is_done(&self) -> bool {
        self.next_iteration >= self.iterations
    }

    /// Problems trained on at iteration `t`.
    pub fn batch(&self, t: u64) -> Vec<Arc<TaskSpec>> {
        let n = self.batch_problems.min(self.pool.len());
        let mut rng = rng_for(&[self.seed, BATCH_SALT, t]);
        index::sample(&mut rng, self.pool.len(), n).into_iter().map(|i| Arc::clone(&self.pool[i])).collect()
    }

    pub fn step(&mut self) -> Result<IterationStats> {
        let t = self.next_iteration;
        let problems = self.batch(t);
        let (next, stats) = train_step(&self.params, &problems, &self.setup, t)?;
        self.params = next;
        self.next_iteration += 1;
        self.curve.push(stats.clone());
        Ok(stats)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            next_iteration: self.next_iteration,
            params: self.params.clone(),
            initial_params: self.initial.clone(),
            vocab: self.setup.vocab.clone(),
            budgets: self.budgets().cloned(),
            curve: self.curve.clone(),
        }
    }
}

/// Per-problem budgets from `k` rollouts of the initial policy, frozen.
#[allow(clippy::too_many_arguments)]
pub fn initial_budgets(
    pool: &[Arc<TaskSpec>],
    params: &PolicyParams,
    vocab: &Vocabulary,
    settings: &Arc<EnvSettings>,
    k: usize,
    seed: u64,
    concurrency: usize,
    rho: f64,
    fallback: u32,
) -> Result<BudgetTable> {
    let jobs: Vec<EpisodeJob> = pool
        .iter()
        .enumerate()
        .flat_map(|(p, task)| {
            (0..k).map(move |j| EpisodeJob {
                task: Arc::clone(task),
                seed: derive_seed(&[seed, BUDGET_SALT, p as u64, j as u64]),
            })
        })
        .collect();
    let policy = LinearPolicy::new(params, vocab)?;
    let traces = rollout_manager(&jobs, &policy, settings, concurrency).into_iter().collect::<Result<Vec<_>>>()?;
    let mut table = BudgetTable::new();
    for (p, task) in pool.iter().enumerate() {
        let pairs: Vec<(u32, f64)> =
            traces[p * k..(p + 1) * k].iter().map(|tr| (tr.len() as u32, r_perf(task, tr))).collect();
        table.insert(task.task_id.clone(), estimate_budget(&pairs, rho, fallback))?;
    }
    table.freeze();
    Ok(table)
}

/// Aggregates over the evaluation episodes of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEval {
    pub policy: String,
    pub episodes: usize,
    pub mean_r_perf: f64,
    pub mean_critical_steps: f64,
    pub mean_total_steps: f64,
    /// Mean number of orchestrator tokens per trace.
    pub mean_tokens: f64,
    pub mean_parallelism: f64,
    pub zero_spawn_fraction: f64,
    pub mean_finish_rate: f64,
    pub assigned: u64,
    pub completed: u64,
    pub mean_orchestrator_context: f64,
}

impl PolicyEval {
    pub fn from_traces(policy: &str, pairs: &[(Arc<TaskSpec>, EpisodeTrace)], step_tokens: u32) -> Self {
        let n = pairs.len().max(1) as f64;
        let mean = |f: &dyn Fn(&TaskSpec, &EpisodeTrace) -> f64| pairs.iter().map(|(t, tr)| f(t, tr)).sum::<f64>() / n;
        let count = |f: &dyn Fn(&crate::metrics::StageRecord) -> u32| {
            pairs.iter().flat_map(|(_, tr)| tr.stages.iter()).map(|s| f(s) as u64).sum()
        };
        PolicyEval {
            policy: policy.to_string(),
            episodes: pairs.len(),
            mean_r_perf: mean(&|t, tr| r_perf(t, tr)),
            mean_critical_steps: mean(&|_, tr| critical_steps(&tr.stages) as f64),
            mean_total_steps: mean(&|_, tr| total_steps(&tr.stages) as f64),
            mean_tokens: mean(&|_, tr| tr.len() as f64),
            mean_parallelism: mean(&|_, tr| parallelism_degree(&tr.stages).max_width as f64),
            zero_spawn_fraction: mean(&|_, tr| f64::from(parallelism_degree(&tr.stages).episodes_with_zero_spawn)),
            mean_finish_rate: mean(&|_, tr| finish_rate(&tr.stages)),
            assigned: count(&|s| s.assigned),
            completed: count(&|s| s.completed),
            mean_orchestrator_context: mean(&|_, tr| context_usage(tr, step_tokens).orchestrator_tokens as f64),
        }
    }

    /// Assigned over completed sub-agent runs; infinite when nothing completed.
    pub fn assigned_per_completed(&self) -> f64 {
        if self.completed == 0 {
            if self.assigned == 0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.assigned as f64 / self.completed as f64
        }
    }
}

/// Critical steps until the collected answer first reaches `threshold`,
/// counting the finishing action. `None` when the episode never gets there.
pub fn steps_to_threshold(
    policy: &dyn Policy,
    task: Arc<TaskSpec>,
    seed: u64,
    settings: Arc<EnvSettings>,
    threshold: f64,
) -> Result<Option<u64>> {
    let mut runner = EpisodeRunner::start(task, seed, settings)?;
    loop {
        let env = runner.env();
        let answer = env.final_answer().cloned().unwrap_or_else(|| env.collected_answer());
        if r_perf_answer(env.task(), &answer) >= threshold {
            let finished = env.stages().last().is_some_and(|s| s.action == StageAction::Finish);
            return Ok(Some(critical_steps(env.stages()) + u64::from(!finished)));
        }
        if runner.is_done() {
            return Ok(None);
        }
        runner.advance(policy);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub threshold: f64,
    pub serial_critical_steps: Option<f64>,
    pub swarm_critical_steps: Option<f64>,
    /// Serial over swarm critical steps at matched r_perf.
    pub speedup: Option<f64>,
}

pub fn speedup_table(
    serial: &dyn Policy,
    swarm: &dyn Policy,
    tasks: &[(Arc<TaskSpec>, u64)],
    settings: &Arc<EnvSettings>,
    thresholds: &[f64],
) -> Result<Vec<SpeedupRow>> {
    let mean_steps = |policy: &dyn Policy, th: f64| -> Result<Option<f64>> {
        let mut sum = 0u64;
        for (task, seed) in tasks {
            match steps_to_threshold(policy, Arc::clone(task), *seed, Arc::clone(settings), th)? {
                Some(s) => sum += s,
                None => return Ok(None),
            }
        }
        Ok(Some(sum as f64 / tasks.len().max(1) as f64))
    };
    thresholds
        .iter()
        .map(|&threshold| {
            let s = mean_steps(serial, threshold)?;
            let w = mean_steps(swarm, threshold)?;
            let speedup = s.zip(w).filter(|&(_, w)| w > 0.0).map(|(s, w)| s / w);
            Ok(SpeedupRow { threshold, serial_critical_steps: s, swarm_critical_steps: w, speedup })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub iterations_run: u64,
    pub final_snapshot: String,
    pub curve: Vec<IterationStats>,
    pub evals: Vec<PolicyEval>,
    pub speedup: Vec<SpeedupRow>,
}

impl SeedSummary {
    pub fn eval(&self, policy: &str) -> Option<&PolicyEval> {
        self.evals.iter().find(|e| e.policy == policy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub seeds: Vec<SeedSummary>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Continue each seed from its latest checkpoint when one exists.
    pub resume: bool,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    run_experiment_with(cfg, RunOptions::default())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, opts: RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("vocab.json"), serde_json::to_string_pretty(&cfg.vocabulary()?.manifest())?)?;
    }
    let seeds = cfg.seeds.iter().map(|&s| run_seed(cfg, s, opts)).collect::<Result<Vec<_>>>()?;
    let summary = RunSummary { mode: cfg.mode, seeds };
    if let Some(dir) = &cfg.output_dir {
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(summary)
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

fn run_seed(cfg: &ExperimentConfig, seed: u64, opts: RunOptions) -> Result<SeedSummary> {
    let dir = cfg.output_dir.as_ref().map(|d| seed_dir(d, seed));
    if let Some(d) = &dir {
        fs::create_dir_all(d.join("checkpoints"))?;
    }
    let trainer = match cfg.mode {
        Mode::Eval => Trainer::new(&ExperimentConfig { toggle: None, ..cfg.clone() }, seed)?,
        Mode::Train => {
            let latest = dir.as_ref().map(|d| d.join("checkpoints").join("latest.json"));
            let mut trainer = match latest.filter(|p| opts.resume && p.exists()) {
                Some(p) => Trainer::resume(cfg, Checkpoint::load(&p)?)?,
                None => Trainer::new(cfg, seed)?,
            };
            while !trainer.is_done() {
                trainer.step()?;
                let t = trainer.next_iteration();
                if let Some(d) = &dir {
                    if cfg.checkpoint_every > 0 && t % cfg.checkpoint_every == 0 {
                        let ckpt = trainer.checkpoint();
                        ckpt.save(&d.join("checkpoints").join(format!("iter-{t:06}.json")))?;
                        ckpt.save(&d.join("checkpoints").join("latest.json"))?;
                    }
                }
            }
            if let Some(d) = &dir {
                write_curve_csv(&d.join("curve.csv"), trainer.curve())?;
            }
            trainer
        }
    };
    if let Some(d) = &dir {
        // Evaluation traces of parameterized policies replay from this file.
        let ckpt = trainer.checkpoint();
        ckpt.save(&d.join("checkpoints").join("final.json"))?;
        ckpt.save(&d.join("checkpoints").join("latest.json"))?;
    }
    evaluate(cfg, &trainer, dir.as_deref())
}

fn evaluate(cfg: &ExperimentConfig, trainer: &Trainer, dir: Option<&Path>) -> Result<SeedSummary> {
    let seed = trainer.seed();
    let settings = Arc::new(cfg.env.clone());
    let n_tasks = cfg.eval.tasks.unwrap_or(cfg.tasks.count);
    let tasks = cfg.tasks.sample(seed, EVAL_SALT, n_tasks)?;
    let jobs: Vec<EpisodeJob> = tasks
        .iter()
        .enumerate()
        .flat_map(|(i, task)| {
            (0..cfg.eval.episodes_per_task).map(move |j| EpisodeJob {
                task: Arc::clone(task),
                seed: derive_seed(&[seed, EVAL_SALT, i as u64, j as u64]),
            })
        })
        .collect();
    let reward_iteration = if cfg.mode == Mode::Train { cfg.rl.iterations } else { 0 };

    let mut records = Vec::new();
    let mut evals = Vec::new();
    for spec in &cfg.eval.policies {
        let label = spec.label();
        let policy = build_policy(spec, trainer.params(), trainer.initial_params(), trainer.vocab())?;
        let traces = rollout_manager(&jobs, policy.as_ref(), &settings, cfg.concurrency_limit)
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<(Arc<TaskSpec>, EpisodeTrace)> =
            jobs.iter().map(|j| Arc::clone(&j.task)).zip(traces).collect();
        evals.push(PolicyEval::from_traces(&label, &pairs, settings.step_tokens));
        let recs: Vec<TraceRecord> = pairs
            .into_iter()
            .map(|(task, tr)| TraceRecord::new(&label, &task, tr, &cfg.parl, reward_iteration, &settings, cfg.trace_level))
            .collect();
        if let Some(d) = dir {
            let rows: Vec<_> = recs.iter().map(|r| r.metrics.clone()).collect();
            write_metrics_csv(fs::File::create(d.join(format!("metrics-{label}.csv")))?, &rows)?;
        }
        records.extend(recs);
    }

    let mut speedup = Vec::new();
    if !cfg.eval.thresholds.is_empty() {
        let find = |f: fn(&PolicySpec) -> bool| cfg.eval.policies.iter().find(|p| f(p)).expect("validated");
        let serial = build_policy(find(|p| matches!(p, PolicySpec::Serial)), trainer.params(), trainer.initial_params(), trainer.vocab())?;
        let swarm = build_policy(find(|p| matches!(p, PolicySpec::Swarm { .. })), trainer.params(), trainer.initial_params(), trainer.vocab())?;
        let pairs: Vec<(Arc<TaskSpec>, u64)> = jobs.iter().map(|j| (Arc::clone(&j.task), j.seed)).collect();
        speedup = speedup_table(serial.as_ref(), swarm.as_ref(), &pairs, &settings, &cfg.eval.thresholds)?;
    }

    if let Some(d) = dir {
        write_jsonl(&d.join("traces.jsonl"), &records)?;
        if !speedup.is_empty() {
            write_speedup_csv(&d.join("speedup.csv"), &speedup)?;
        }
    }
    Ok(SeedSummary {
        seed,
        iterations_run: trainer.next_iteration(),
        final_snapshot: trainer.params().snapshot_id(),
        curve: trainer.curve().to_vec(),
        evals,
        speedup,
    })
}

pub fn build_policy<'a>(
    spec: &PolicySpec,
    params: &'a PolicyParams,
    initial: &'a PolicyParams,
    vocab: &'a Vocabulary,
) -> Result<Box<dyn Policy + 'a>> {
    Ok(match spec {
        PolicySpec::Serial => Box::new(SerialPolicy),
        PolicySpec::Swarm { k, rounds, scheme, template } => {
            Box::new(SwarmPolicy { template: template.clone(), k: *k, scheme: *scheme, rounds: *rounds })
        }
        PolicySpec::Learned => Box::new(LinearPolicy::new(params, vocab)?),
        PolicySpec::Initial => Box::new(LinearPolicy::new(initial, vocab)?),
    })
}

pub fn write_curve_csv(path: &Path, curve: &[IterationStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "mean_reward", "mean_critical_steps", "mean_parallelism", "mean_tokens", "phase"])?;
    for s in curve {
        let phase = match s.phase {
            None => "",
            Some(Phase::Phase0) => "phase0",
            Some(Phase::Phase1) => "phase1",
        };
        w.write_record([
            s.iteration.to_string(),
            s.mean_reward.to_string(),
            s.mean_critical_steps.to_string(),
            s.mean_parallelism.to_string(),
            s.mean_tokens.to_string(),
            phase.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_speedup_csv(path: &Path, rows: &[SpeedupRow]) -> Result<()> {
    let mut w = fs::File::create(path)?;
    writeln!(w, "threshold,serial_critical_steps,swarm_critical_steps,speedup")?;
    let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.threshold,
            opt(r.serial_critical_steps),
            opt(r.swarm_critical_steps),
            opt(r.speedup)
        )?;
    }
    Ok(())
}

/// Every parameter snapshot (current and initial) stored in checkpoint
/// files below `root`.
pub fn load_snapshots(root: &Path) -> Result<SnapshotStore> {
    let mut store = SnapshotStore::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let mut entries: Vec<_> = fs::read_dir(&dir)?.collect::<std::io::Result<Vec<_>>>()?;
        entries.sort_by_key(|e| e.path());
        for e in entries {
            let path = e.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|x| x == "json")
                && path.parent().and_then(Path::file_name).is_some_and(|n| n == "checkpoints")
            {
                let ckpt = Checkpoint::load(&path)?;
                store.insert(ckpt.initial_params, ckpt.vocab.clone());
                store.insert(ckpt.params, ckpt.vocab);
            }
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{FamilyRange, SizeRange, TaskDistribution};
    use crate::harness::trace::{read_jsonl, replay_trace};
    use crate::optimizer::RLConfig;

    fn cfg(out: Option<PathBuf>) -> ExperimentConfig {
        ExperimentConfig {
            mode: Mode::Train,
            tasks: TaskDistribution {
                families: vec![FamilyRange::WideSearch { n_items: SizeRange { min: 4, max: 10 }, sources_per_item: SizeRange::fixed(1) }],
                count: 6,
                limits: None,
            },
            rl: RLConfig { iterations: 6, batch_problems: 3, k: 4, ..RLConfig::default() },
            parl: Default::default(),
            toggle: None,
            seeds: vec![3],
            concurrency_limit: 2,
            output_dir: out,
            trace_level: Default::default(),
            vocab: Default::default(),
            env: Default::default(),
            init: vec![],
            eval: crate::harness::config::EvalConfig {
                policies: vec![PolicySpec::Learned, PolicySpec::Serial, PolicySpec::Swarm { k: 4, rounds: 1, scheme: crate::orchestrator::PartitionScheme::SizeBalanced, template: "searcher".into() }],
                tasks: Some(4),
                episodes_per_task: 2,
                thresholds: vec![0.5, 1.0],
            },
            checkpoint_every: 2,
        }
    }

    #[test]
    fn resume_reproduces_remaining_iterations() {
        let c = cfg(None);
        let mut straight = Trainer::new(&c, 3).unwrap();
        while !straight.is_done() {
            straight.step().unwrap();
        }
        let mut first = Trainer::new(&c, 3).unwrap();
        first.step().unwrap();
        first.step().unwrap();
        let json = serde_json::to_string(&first.checkpoint()).unwrap();
        let ckpt: Checkpoint = serde_json::from_str(&json).unwrap();
        let mut resumed = Trainer::resume(&c, Checkpoint { vocab: ckpt.vocab.clone().reindex().unwrap(), ..ckpt }).unwrap();
        while !resumed.is_done() {
            resumed.step().unwrap();
        }
        assert_eq!(resumed.curve(), straight.curve());
        assert_eq!(resumed.params(), straight.params());
    }

    #[test]
    fn outputs_are_reproducible_and_replayable() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sa = run_experiment(&cfg(Some(a.path().into()))).unwrap();
        let sb = run_experiment(&cfg(Some(b.path().into()))).unwrap();
        assert_eq!(sa, sb);
        for f in ["curve.csv", "metrics-learned.csv", "metrics-serial.csv", "speedup.csv", "traces.jsonl"] {
            let fa = fs::read(seed_dir(a.path(), 3).join(f)).unwrap();
            assert_eq!(fa, fs::read(seed_dir(b.path(), 3).join(f)).unwrap(), "{f}");
        }
        let store = load_snapshots(a.path()).unwrap();
        for r in read_jsonl(&seed_dir(a.path(), 3).join("traces.jsonl")).unwrap() {
            assert!(replay_trace(&r, &store).unwrap().is_clean());
        }
    }

    #[test]
    fn toggle_budgets_are_frozen_at_init() {
        let mut c = cfg(None);
        c.toggle = Some(Default::default());
        let t = Trainer::new(&c, 3).unwrap();
        let b = t.budgets().unwrap();
        assert!(b.is_frozen());
        assert_eq!(b.len(), t.pool().len());
    }

    #[test]
    fn serial_reaches_thresholds_one_unit_per_step() {
        let task = Arc::new(crate::task_gen::gen_wide_search(1, 40, 1).unwrap());
        let s = Arc::new(EnvSettings::default());
        // 2j/(40+j) >= 0.7 first holds at j = 22 fetches, plus the finish.
        assert_eq!(steps_to_threshold(&SerialPolicy, task.clone(), 0, s.clone(), 0.7).unwrap(), Some(23));
        assert_eq!(steps_to_threshold(&SerialPolicy, task.clone(), 0, s.clone(), 1.0).unwrap(), Some(41));
        assert_eq!(steps_to_threshold(&SwarmPolicy::new(10), task, 0, s, 0.7).unwrap(), Some(7));
    }
}
