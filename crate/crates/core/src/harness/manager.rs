//! Concurrent episode execution and partial rollouts.

use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use crate::environment::EnvSettings;
use crate::error::{Error, Result};
use crate::orchestrator::{EpisodeRunner, EpisodeTrace, Policy, TokenRecord};
use crate::task_gen::TaskSpec;

#[derive(Debug, Clone)]
pub struct EpisodeJob {
    pub task: Arc<TaskSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ManagerStats {
    pub peak_in_flight: usize,
}

/// Runs every job as an independent episode with at most `limit` in flight.
/// Output order equals job order; each result equals what a sequential loop
/// would produce.
pub fn rollout_manager(
    jobs: &[EpisodeJob],
    policy: &dyn Policy,
    settings: &Arc<EnvSettings>,
    limit: usize,
) -> Vec<Result<EpisodeTrace>> {
    rollout_manager_with_stats(jobs, policy, settings, limit).0
}

pub fn rollout_manager_with_stats(
    jobs: &[EpisodeJob],
    policy: &dyn Policy,
    settings: &Arc<EnvSettings>,
    limit: usize,
) -> (Vec<Result<EpisodeTrace>>, ManagerStats) {
    let run = |job: &EpisodeJob| -> Result<EpisodeTrace> {
        Ok(EpisodeRunner::start(Arc::clone(&job.task), job.seed, Arc::clone(settings))?.finish(policy))
    };
    let workers = limit.max(1).min(jobs.len());
    if workers <= 1 {
        let peak = usize::from(!jobs.is_empty());
        return (jobs.iter().map(run).collect(), ManagerStats { peak_in_flight: peak });
    }

    let next = AtomicUsize::new(0);
    let in_flight = AtomicUsize::new(0);
    let peak = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<EpisodeTrace>>> = (0..jobs.len()).map(|_| None).collect();
    thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= jobs.len() {
                            break;
                        }
                        let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        done.push((i, run(&jobs[i])));
                        in_flight.fetch_sub(1, Ordering::SeqCst);
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("rollout worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    let results = slots.into_iter().map(|s| s.expect("every job ran exactly once")).collect();
    (results, ManagerStats { peak_in_flight: peak.into_inner() })
}

/// Everything needed to continue an in-flight episode later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumeToken {
    pub task: TaskSpec,
    pub seed: u64,
    pub settings: EnvSettings,
    pub snapshot_id: String,
    pub tokens: Vec<TokenRecord>,
}

pub fn suspend_episode(runner: &EpisodeRunner) -> ResumeToken {
    let env = runner.env();
    ResumeToken {
        task: env.task().clone(),
        seed: env.seed(),
        settings: env.settings().clone(),
        snapshot_id: runner.snapshot_id().to_string(),
        tokens: runner.tokens().to_vec(),
    }
}

pub struct Resumed {
    pub runner: EpisodeRunner,
    /// The continuing policy differs from the one that produced the prefix;
    /// the finished trace will carry the partial-rollout flag.
    pub stale: bool,
}

/// Rebuilds the episode from its recorded prefix. The prefix keeps the
/// log-probabilities it was sampled with; tokens emitted after resuming are
/// recorded under `policy`.
pub fn resume_episode(token: ResumeToken, policy: &dyn Policy) -> Result<Resumed> {
    let mut runner = EpisodeRunner::start(Arc::new(token.task), token.seed, Arc::new(token.settings))?;
    for record in token.tokens {
        runner.replay_token(record, &token.snapshot_id)?;
    }
    let stale = !token.snapshot_id.is_empty() && policy.snapshot_id() != token.snapshot_id;
    if stale {
        runner.mark_partial();
    }
    if runner.is_done() && runner.tokens().is_empty() {
        return Err(Error::MissingData("resume token holds no episode".into()));
    }
    Ok(Resumed { runner, stale })
}
