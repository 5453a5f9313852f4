//! Orchestrator-agent training for parallel sub-agent execution.
//!
//! A trainable orchestrator decomposes a task, creates sub-agents from fixed
//! templates and dispatches them in parallel groups. Episodes are scored by a
//! composite reward with annealed auxiliary terms and optimized with a
//! clipped, token-level policy gradient.

pub mod environment;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod optimizer;
pub mod orchestrator;
pub mod rewards;
pub mod rng;
pub mod task_gen;

pub use environment::{
    Action, Answer, EnvSettings, Environment, Observation, StepOutcome, SubagentProfile, Subtask, SubtaskAssignment,
    SubtaskResult, TerminalFlag, Tool, ToolCall, ToolResult,
};
pub use error::{Error, Result};
pub use metrics::{critical_steps, finish_rate, parallelism_degree, total_steps, ParallelismStats, StageRecord};
pub use optimizer::{rl_gradient, rl_objective, train_step, RLConfig, RolloutBatch, TrainSetup};
pub use orchestrator::{
    ActionToken, EpisodeTrace, LinearPolicy, PartitionScheme, Policy, PolicyParams, SerialPolicy, SwarmPolicy,
    VocabConfig, Vocabulary,
};
pub use rewards::{parl_reward, BudgetTable, PARLConfig, RewardBreakdown, ToggleConfig};
pub use task_gen::{generate, GroundTruth, StepLimits, TaskKind, TaskParams, TaskSpec};
