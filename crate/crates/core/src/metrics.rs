//! Cost and behavior accounting over stage records.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::Result;
use crate::orchestrator::{EpisodeTrace, TerminalFlag};
use crate::task_gen::TaskKind;

/// Default tokens charged per internal tool step when accounting context.
pub const DEFAULT_STEP_TOKENS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageAction {
    Tool,
    CreateAgent,
    AssignGroup,
    Finish,
    Noop,
}

/// One execution stage: the orchestrator's own steps plus, when a group was
/// launched, the step count of every sub-agent in it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage_index: u32,
    pub main_steps: u32,
    pub sub_steps: Vec<u32>,
    pub assigned: u32,
    pub completed: u32,
    pub action: StageAction,
    /// Set when the action could not be carried out (unknown agent,
    /// duplicate name, group with nobody to run it).
    pub failed: bool,
    /// Tokens appended to the orchestrator context by this stage.
    pub routed_tokens: u32,
}

impl StageRecord {
    /// A stage with one main step and the given sub-agent group.
    pub fn group(stage_index: u32, sub_steps: Vec<u32>, completed: u32) -> Self {
        let assigned = sub_steps.len() as u32;
        StageRecord {
            stage_index,
            main_steps: 1,
            action: if sub_steps.is_empty() { StageAction::Tool } else { StageAction::AssignGroup },
            sub_steps,
            assigned,
            completed,
            failed: false,
            routed_tokens: 0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.completed <= self.assigned && self.sub_steps.len() == self.assigned as usize
    }

    /// Duration of the stage: main steps plus the slowest sub-agent.
    pub fn critical_steps(&self) -> u64 {
        self.main_steps as u64 + self.sub_steps.iter().copied().max().unwrap_or(0) as u64
    }

    pub fn total_steps(&self) -> u64 {
        self.main_steps as u64 + self.sub_steps.iter().map(|&s| s as u64).sum::<u64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParallelismStats {
    pub max_width: u32,
    pub mean_width: f64,
    pub episodes_with_zero_spawn: bool,
}

pub fn critical_steps(stages: &[StageRecord]) -> u64 {
    stages.iter().map(StageRecord::critical_steps).sum()
}

pub fn total_steps(stages: &[StageRecord]) -> u64 {
    stages.iter().map(StageRecord::total_steps).sum()
}

pub fn parallelism_degree(stages: &[StageRecord]) -> ParallelismStats {
    let max_width = stages.iter().map(|s| s.sub_steps.len() as u32).max().unwrap_or(0);
    let mean_width = if stages.is_empty() {
        0.0
    } else {
        stages.iter().map(|s| s.sub_steps.len() as f64).sum::<f64>() / stages.len() as f64
    };
    ParallelismStats { max_width, mean_width, episodes_with_zero_spawn: max_width == 0 }
}

/// Completed over assigned subtasks; zero when nothing was assigned.
pub fn finish_rate(stages: &[StageRecord]) -> f64 {
    let assigned: u64 = stages.iter().map(|s| s.assigned as u64).sum();
    if assigned == 0 {
        return 0.0;
    }
    let completed: u64 = stages.iter().map(|s| s.completed as u64).sum();
    completed as f64 / assigned as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextUsage {
    pub orchestrator_tokens: u64,
    pub max_subagent_tokens: u64,
}

pub fn context_usage(trace: &EpisodeTrace, step_tokens: u32) -> ContextUsage {
    let orchestrator_tokens = trace.stages.iter().map(|s| s.routed_tokens as u64).sum();
    let max_sub = trace
        .stages
        .iter()
        .flat_map(|s| s.sub_steps.iter().copied())
        .max()
        .unwrap_or(0);
    ContextUsage {
        orchestrator_tokens,
        max_subagent_tokens: max_sub as u64 * step_tokens as u64,
    }
}

/// One CSV row per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub task_id: String,
    pub kind: TaskKind,
    pub critical_steps: u64,
    pub total_steps: u64,
    pub max_width: u32,
    pub mean_width: f64,
    pub finish_rate: f64,
    pub r_perf: f64,
    pub terminal_flag: TerminalFlag,
}

impl MetricsRow {
    pub fn from_trace(kind: TaskKind, trace: &EpisodeTrace, r_perf: f64) -> Self {
        let par = parallelism_degree(&trace.stages);
        MetricsRow {
            task_id: trace.task_id.clone(),
            kind,
            critical_steps: critical_steps(&trace.stages),
            total_steps: total_steps(&trace.stages),
            max_width: par.max_width,
            mean_width: par.mean_width,
            finish_rate: finish_rate(&trace.stages),
            r_perf,
            terminal_flag: trace.terminal_flag,
        }
    }
}

pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn serial(n: u32) -> Vec<StageRecord> {
        (0..n).map(|t| StageRecord::group(t, vec![], 0)).collect()
    }

    #[test]
    fn serial_stages_cost_one_each() {
        assert_eq!(critical_steps(&serial(3)), 3);
        assert_eq!(total_steps(&serial(3)), 3);
    }

    #[test]
    fn worked_example() {
        let stages = vec![StageRecord::group(0, vec![4, 2, 7], 3), StageRecord::group(1, vec![3, 3], 2)];
        assert_eq!(critical_steps(&stages), 12);
        assert_eq!(total_steps(&stages[..1]), 14);
        assert_eq!(total_steps(&[]), 0);
        assert_eq!(critical_steps(&[]), 0);
    }

    #[test]
    fn parallelism_examples() {
        let p = parallelism_degree(&serial(4));
        assert_eq!(p.max_width, 0);
        assert!(p.episodes_with_zero_spawn);

        let stages = vec![
            StageRecord::group(0, vec![], 0),
            StageRecord::group(1, vec![1; 3], 3),
            StageRecord::group(2, vec![1; 5], 5),
        ];
        let p = parallelism_degree(&stages);
        assert_eq!(p.max_width, 5);
        assert!((p.mean_width - 8.0 / 3.0).abs() < 1e-15);
        assert!(!p.episodes_with_zero_spawn);
    }

    #[test]
    fn finish_rate_examples() {
        let full = vec![StageRecord::group(0, vec![1; 4], 4), StageRecord::group(1, vec![1; 2], 2)];
        assert_eq!(finish_rate(&full), 1.0);
        assert_eq!(finish_rate(&[StageRecord::group(0, vec![1; 4], 1)]), 0.25);
        assert_eq!(finish_rate(&serial(5)), 0.0);
    }

    fn stage_strategy() -> impl Strategy<Value = StageRecord> {
        (1u32..3, proptest::collection::vec(0u32..20, 0..6)).prop_map(|(main, subs)| {
            let n = subs.len() as u32;
            let mut s = StageRecord::group(0, subs, n);
            s.main_steps = main;
            s
        })
    }

    proptest! {
        #[test]
        fn appending_a_stage_is_monotone(
            stages in proptest::collection::vec(stage_strategy(), 0..10),
            extra in stage_strategy(),
        ) {
            let mut longer = stages.clone();
            longer.push(extra);
            prop_assert!(critical_steps(&longer) >= critical_steps(&stages));
            prop_assert!(total_steps(&longer) >= total_steps(&stages));
        }

        #[test]
        fn width_stats_are_ordered(stages in proptest::collection::vec(stage_strategy(), 0..10)) {
            let p = parallelism_degree(&stages);
            prop_assert!(p.max_width as f64 >= p.mean_width && p.mean_width >= 0.0);
            let r = finish_rate(&stages);
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}
