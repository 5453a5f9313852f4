//! Experiment plumbing: concurrent rollouts, trace persistence and replay,
//! configuration and the training/evaluation driver.

pub mod manager;
pub mod trace;
pub mod config;
pub mod experiment;

pub use config::{EvalConfig, ExperimentConfig, FamilyRange, Mode, PolicySpec, SizeRange, TaskDistribution, TokenBias};
pub use experiment::{run_experiment, run_experiment_with, Checkpoint, RunOptions, RunSummary, Trainer};
pub use manager::{resume_episode, rollout_manager, suspend_episode, EpisodeJob, ResumeToken};
pub use trace::{read_jsonl, replay_trace, write_jsonl, ReplayVerdict, SnapshotStore, TraceLevel, TraceRecord};
