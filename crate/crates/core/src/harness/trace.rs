//! JSONL trace records and deterministic replay.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::environment::EnvSettings;
use crate::error::{Error, Result};
use crate::metrics::MetricsRow;
use crate::orchestrator::{rollout_episode, scripted_policy, EpisodeTrace, LinearPolicy, PolicyParams, Vocabulary};
use crate::rewards::{parl_reward, PARLConfig};
use crate::task_gen::TaskSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    /// Stages, answer and reward only; not replayable.
    Summary,
    #[default]
    Full,
}

/// One episode, as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub schema_version: u32,
    pub trace_level: TraceLevel,
    /// Label of the policy that produced the episode (e.g. "learned", "serial").
    pub policy: String,
    /// Iteration whose reward schedule scored the episode.
    pub iteration: u64,
    pub parl: PARLConfig,
    pub settings: EnvSettings,
    /// Present at full level.
    pub task: Option<TaskSpec>,
    pub trace: EpisodeTrace,
    pub metrics: MetricsRow,
}

impl TraceRecord {
    /// Scores `trace` and bundles it. At summary level the task and the
    /// token stream are dropped.
    pub fn new(
        policy: &str,
        task: &TaskSpec,
        mut trace: EpisodeTrace,
        parl: &PARLConfig,
        iteration: u64,
        settings: &EnvSettings,
        level: TraceLevel,
    ) -> Self {
        let reward = parl_reward(task, &trace, parl, iteration);
        trace.reward = Some(reward);
        let metrics = MetricsRow::from_trace(task.kind, &trace, reward.r_perf);
        let task = match level {
            TraceLevel::Full => Some(task.clone()),
            TraceLevel::Summary => {
                trace.tokens.clear();
                None
            }
        };
        TraceRecord {
            schema_version: SCHEMA_VERSION,
            trace_level: level,
            policy: policy.to_string(),
            iteration,
            parl: *parl,
            settings: settings.clone(),
            task,
            trace,
            metrics,
        }
    }

    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let rec: TraceRecord = serde_json::from_str(line)?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "trace schema version {} is not supported (expected {SCHEMA_VERSION})",
                rec.schema_version
            )));
        }
        Ok(rec)
    }
}

pub fn write_jsonl(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(w, "{}", r.to_line()?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TraceRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(TraceRecord::from_line(&line)?);
        }
    }
    Ok(out)
}

/// Parameter snapshots addressable by id, for replaying learned-policy
/// traces. Scripted policies resolve from their id alone.
#[derive(Debug, Clone, Default)]
pub struct SnapshotStore {
    entries: BTreeMap<String, (PolicyParams, Vocabulary)>,
}

impl SnapshotStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, params: PolicyParams, vocab: Vocabulary) -> String {
        let id = params.snapshot_id();
        self.entries.insert(id.clone(), (params, vocab));
        id
    }

    pub fn get(&self, id: &str) -> Option<&(PolicyParams, Vocabulary)> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayVerdict {
    pub divergences: Vec<String>,
}

impl ReplayVerdict {
    pub fn is_clean(&self) -> bool {
        self.divergences.is_empty()
    }
}

/// Re-executes the recorded (snapshot, task, seed) and lists every field
/// that differs from the record.
pub fn replay_trace(record: &TraceRecord, snapshots: &SnapshotStore) -> Result<ReplayVerdict> {
    let task = match (&record.trace_level, &record.task) {
        (TraceLevel::Full, Some(task)) => task,
        _ => return Err(Error::MissingData("summary-level trace cannot be replayed".into())),
    };
    if record.trace.partial_rollout {
        return Err(Error::MissingData("partial rollout spans several snapshots".into()));
    }
    let id = &record.trace.snapshot_id;
    let settings = Arc::new(record.settings.clone());
    let task_arc = Arc::new(task.clone());
    let fresh = if let Some(policy) = scripted_policy(id) {
        rollout_episode(policy.as_ref(), task_arc, record.trace.seed, settings)?
    } else {
        let (params, vocab) = snapshots.get(id).ok_or_else(|| Error::MissingSnapshot(id.clone()))?;
        let policy = LinearPolicy::new(params, vocab)?;
        rollout_episode(&policy, task_arc, record.trace.seed, settings)?
    };

    let rec = &record.trace;
    let mut d = Vec::new();
    if fresh.task_id != rec.task_id {
        d.push(format!("task_id: recorded {} replayed {}", rec.task_id, fresh.task_id));
    }
    if fresh.tokens.len() != rec.tokens.len() {
        d.push(format!("tokens: recorded {} replayed {}", rec.tokens.len(), fresh.tokens.len()));
    }
    for (i, (a, b)) in rec.tokens.iter().zip(&fresh.tokens).enumerate() {
        if a.token != b.token {
            d.push(format!("token {i}: recorded {:?} replayed {:?}", a.token, b.token));
        } else if a.behavior_logprob.to_bits() != b.behavior_logprob.to_bits() {
            d.push(format!("token {i}: logprob recorded {} replayed {}", a.behavior_logprob, b.behavior_logprob));
        } else if a.features != b.features {
            d.push(format!("token {i}: features differ"));
        }
    }
    if fresh.stages.len() != rec.stages.len() {
        d.push(format!("stages: recorded {} replayed {}", rec.stages.len(), fresh.stages.len()));
    }
    for (i, (a, b)) in rec.stages.iter().zip(&fresh.stages).enumerate() {
        if a != b {
            d.push(format!("stage {i}: recorded {a:?} replayed {b:?}"));
        }
    }
    if fresh.final_answer != rec.final_answer {
        d.push("final_answer differs".into());
    }
    if fresh.terminal_flag != rec.terminal_flag {
        d.push(format!("terminal_flag: recorded {:?} replayed {:?}", rec.terminal_flag, fresh.terminal_flag));
    }
    let reward = parl_reward(task, &fresh, &record.parl, record.iteration);
    if rec.reward != Some(reward) {
        d.push(format!("reward: recorded {:?} replayed {:?}", rec.reward, reward));
    }
    let metrics = MetricsRow::from_trace(task.kind, &fresh, reward.r_perf);
    if metrics != record.metrics {
        d.push(format!("metrics: recorded {:?} replayed {metrics:?}", record.metrics));
    }
    Ok(ReplayVerdict { divergences: d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::{SerialPolicy, SwarmPolicy, VocabConfig, FEATURE_DIM};
    use crate::task_gen::{gen_batch_download, gen_deep_search, gen_wide_search};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn learned() -> (PolicyParams, Vocabulary) {
        let vocab = Vocabulary::from_config(&VocabConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = PolicyParams::zeros(FEATURE_DIM, vocab.len());
        p.theta.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
        (p, vocab)
    }

    fn records(level: TraceLevel) -> (Vec<TraceRecord>, SnapshotStore) {
        let (p, vocab) = learned();
        let settings = EnvSettings::default();
        let parl = PARLConfig::default();
        let tasks = [
            gen_wide_search(1, 9, 2).unwrap(),
            gen_deep_search(2, 3, 2).unwrap(),
            gen_batch_download(3, 5, 2).unwrap(),
        ];
        let policy = LinearPolicy::new(&p, &vocab).unwrap();
        let mut out = Vec::new();
        for (i, task) in tasks.iter().enumerate() {
            let arc = Arc::new(task.clone());
            let s = Arc::new(settings.clone());
            let tr = rollout_episode(&policy, arc.clone(), i as u64, s.clone()).unwrap();
            out.push(TraceRecord::new("learned", task, tr, &parl, 7, &settings, level));
            let tr = rollout_episode(&SwarmPolicy::new(4), arc.clone(), i as u64, s.clone()).unwrap();
            out.push(TraceRecord::new("swarm", task, tr, &parl, 7, &settings, level));
            let tr = rollout_episode(&SerialPolicy, arc, i as u64, s).unwrap();
            out.push(TraceRecord::new("serial", task, tr, &parl, 7, &settings, level));
        }
        let mut store = SnapshotStore::new();
        store.insert(p, vocab);
        (out, store)
    }

    #[test]
    fn jsonl_round_trip_is_byte_equal() {
        let (recs, _) = records(TraceLevel::Full);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_jsonl(&path, &recs).unwrap();
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back, recs);
        let first = std::fs::read(&path).unwrap();
        write_jsonl(&path, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn fresh_traces_replay_clean() {
        let (recs, store) = records(TraceLevel::Full);
        for r in &recs {
            let v = replay_trace(r, &store).unwrap();
            assert!(v.is_clean(), "{:?}", v.divergences);
        }
    }

    #[test]
    fn tampered_reward_is_flagged() {
        let (mut recs, store) = records(TraceLevel::Full);
        recs[0].trace.reward.as_mut().unwrap().composite += 0.25;
        let v = replay_trace(&recs[0], &store).unwrap();
        assert!(v.divergences.iter().any(|d| d.starts_with("reward")));
    }

    #[test]
    fn tampered_stage_is_flagged() {
        let (mut recs, store) = records(TraceLevel::Full);
        recs[1].trace.stages[0].main_steps = 2;
        let v = replay_trace(&recs[1], &store).unwrap();
        assert!(v.divergences.iter().any(|d| d.starts_with("stage 0")));
    }

    #[test]
    fn summary_level_is_missing_data() {
        let (recs, store) = records(TraceLevel::Summary);
        assert!(recs[0].task.is_none() && recs[0].trace.tokens.is_empty());
        assert!(matches!(replay_trace(&recs[0], &store), Err(Error::MissingData(_))));
    }

    #[test]
    fn unknown_snapshot_is_reported() {
        let (recs, _) = records(TraceLevel::Full);
        assert!(matches!(replay_trace(&recs[0], &SnapshotStore::new()), Err(Error::MissingSnapshot(_))));
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let (recs, _) = records(TraceLevel::Full);
        let mut r = recs[0].clone();
        r.schema_version = 99;
        assert!(matches!(TraceRecord::from_line(&r.to_line().unwrap()), Err(Error::Config(_))));
    }
}
