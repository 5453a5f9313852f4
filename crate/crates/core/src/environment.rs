//! Episodic environment: tool simulation against hidden ground truth and
//! frozen scripted sub-agents whose summaries come back as observations.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::metrics::{StageAction, StageRecord, DEFAULT_STEP_TOKENS};
use crate::rng::{derive_seed, rng_for};
use crate::task_gen::{aggregate_leaves, GroundTruth, TaskKind, TaskSpec};

/// Per-unit step cost of a sub-agent: `native_cost * multiplier + U{0..=jitter}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCostModel {
    pub multiplier: u32,
    pub jitter: u32,
}

impl Default for StepCostModel {
    fn default() -> Self {
        StepCostModel { multiplier: 1, jitter: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubagentProfile {
    pub name: String,
    pub system_prompt: String,
    /// Probability that a work unit is resolved correctly.
    pub competence: f64,
    pub step_cost: StepCostModel,
}

impl SubagentProfile {
    pub fn new(name: impl Into<String>, competence: f64) -> Self {
        let name = name.into();
        SubagentProfile {
            system_prompt: format!("You are `{name}`. Resolve every unit you are assigned and report the results."),
            name,
            competence,
            step_cost: StepCostModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.competence > 0.0 && self.competence <= 1.0) {
            return Err(Error::invalid_param(format!(
                "competence {} outside (0, 1]",
                self.competence
            )));
        }
        if self.step_cost.multiplier == 0 {
            return Err(Error::invalid_param("step cost multiplier must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvSettings {
    /// Context tokens charged per internal tool step.
    pub step_tokens: u32,
    /// Context tokens charged for every orchestrator action.
    pub action_tokens: u32,
    /// Profiles the orchestrator may instantiate by name.
    pub templates: Vec<SubagentProfile>,
}

impl Default for EnvSettings {
    fn default() -> Self {
        EnvSettings {
            step_tokens: DEFAULT_STEP_TOKENS,
            action_tokens: 1,
            templates: vec![SubagentProfile::new("searcher", 1.0)],
        }
    }
}

impl EnvSettings {
    pub fn template(&self, name: &str) -> Option<&SubagentProfile> {
        self.templates.iter().find(|t| t.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::Config("at least one sub-agent template is required".into()));
        }
        self.templates.iter().try_for_each(SubagentProfile::validate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    Search,
    Fetch,
    Download,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: Tool,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ToolResult {
    Candidates { keys: Vec<String> },
    /// More independent sources must be fetched before the value is known.
    Partial { key: String, fetched: u32, required: u32 },
    Value { key: String, value: String },
    /// The next link of an evidence chain.
    Link { key: String, next: String },
    Downloading { id: String, done: u32, required: u32 },
    Acquired { id: String },
    NotFound,
}

/// Indices of work units in the parent task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    pub units: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskAssignment {
    pub agent_name: String,
    pub subtask: Subtask,
    pub seed: u64,
}

impl SubtaskAssignment {
    /// Renders the assignment as an `assign_task` call.
    pub fn to_tool_call(&self, task: &TaskSpec) -> Value {
        let keys: Vec<&str> = self
            .subtask
            .units
            .iter()
            .filter(|&&u| u < task.unit_count())
            .map(|&u| task.ground_truth.unit_key(u))
            .collect();
        json!({
            "name": "assign_task",
            "arguments": { "agent": self.agent_name, "prompt": format!("Resolve units: {}", keys.join(", ")) }
        })
    }

    /// Parses an `assign_task` call back into an assignment.
    pub fn from_tool_call(call: &Value, task: &TaskSpec, seed: u64) -> Result<Self> {
        let args = tool_arguments(call, "assign_task")?;
        let agent = str_arg(args, "agent")?;
        let prompt = str_arg(args, "prompt")?;
        let list = prompt
            .strip_prefix("Resolve units:")
            .ok_or_else(|| Error::InvalidSubtask(format!("unrecognised prompt `{prompt}`")))?;
        let units = list
            .split(',')
            .map(str::trim)
            .filter(|k| !k.is_empty())
            .map(|k| {
                task.ground_truth
                    .unit_index(k)
                    .ok_or_else(|| Error::InvalidSubtask(format!("unknown unit `{k}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SubtaskAssignment { agent_name: agent.to_string(), subtask: Subtask { units }, seed })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadEntry {
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskResult {
    pub agent_name: String,
    pub steps_used: u32,
    pub finished: bool,
    pub resolved: Vec<usize>,
    pub payload: Vec<PayloadEntry>,
    pub summary_tokens: u32,
}

impl SubtaskResult {
    fn failed(agent_name: &str) -> Self {
        SubtaskResult {
            agent_name: agent_name.to_string(),
            steps_used: 0,
            finished: false,
            resolved: vec![],
            payload: vec![],
            summary_tokens: 1,
        }
    }
}

/// Submitted solution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Answer {
    None,
    Items(BTreeMap<String, String>),
    Aggregate(String),
    Files(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Tool(ToolCall),
    CreateSubagent(SubagentProfile),
    AssignTasks(Vec<SubtaskAssignment>),
    Finish(Answer),
    /// A decoded token that could not be turned into a real action.
    Noop { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalFlag {
    Finished,
    BudgetExhausted,
    TokenCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub task_description: String,
    /// (action summary, result summary); sub-agent traces never appear here.
    pub visible_history: Vec<(String, String)>,
    pub remaining_orchestrator_steps: u32,
    pub orchestrator_context_tokens: u64,
    pub unresolved_units: u32,
    pub total_units: u32,
    pub live_agents: u32,
    /// Finish rate of the most recent group, 0 before any group ran.
    pub last_finish_rate: f64,
    pub actions_taken: u32,
}

#[derive(Debug)]
pub struct StepOutcome {
    pub observation: Observation,
    pub done: bool,
    /// Action-level failure; the stage is still recorded and the episode goes on.
    pub error: Option<Error>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct UnitState {
    progress: u32,
    resolved: bool,
}

/// One episode's environment state. Owned by exactly one episode.
#[derive(Debug, Clone)]
pub struct Environment {
    task: Arc<TaskSpec>,
    seed: u64,
    settings: Arc<EnvSettings>,
    agents: Vec<SubagentProfile>,
    units: Vec<UnitState>,
    stages: Vec<StageRecord>,
    history: Vec<(String, String)>,
    remaining_steps: u32,
    context_tokens: u64,
    last_finish_rate: f64,
    terminal: Option<TerminalFlag>,
    final_answer: Option<Answer>,
}

impl Environment {
    pub fn reset(task: Arc<TaskSpec>, seed: u64) -> Result<(Self, Observation)> {
        Self::reset_with(task, seed, Arc::new(EnvSettings::default()))
    }

    pub fn reset_with(
        task: Arc<TaskSpec>,
        seed: u64,
        settings: Arc<EnvSettings>,
    ) -> Result<(Self, Observation)> {
        task.validate()?;
        settings.validate()?;
        let env = Environment {
            units: vec![UnitState::default(); task.unit_count()],
            remaining_steps: task.limits.orchestrator_max_steps,
            task,
            seed,
            settings,
            agents: vec![],
            stages: vec![],
            history: vec![],
            context_tokens: 0,
            last_finish_rate: 0.0,
            terminal: None,
            final_answer: None,
        };
        let obs = env.observation();
        Ok((env, obs))
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn task_arc(&self) -> &Arc<TaskSpec> {
        &self.task
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn settings(&self) -> &EnvSettings {
        &self.settings
    }

    pub fn agents(&self) -> &[SubagentProfile] {
        &self.agents
    }

    pub fn stages(&self) -> &[StageRecord] {
        &self.stages
    }

    pub fn is_done(&self) -> bool {
        self.terminal.is_some()
    }

    pub fn terminal(&self) -> Option<TerminalFlag> {
        self.terminal
    }

    pub fn final_answer(&self) -> Option<&Answer> {
        self.final_answer.as_ref()
    }

    pub fn context_tokens(&self) -> u64 {
        self.context_tokens
    }

    /// Unresolved work units in priority (index) order.
    pub fn unresolved_units(&self) -> Vec<usize> {
        (0..self.units.len()).filter(|&u| !self.units[u].resolved).collect()
    }

    pub fn is_resolved(&self, unit: usize) -> bool {
        self.units.get(unit).is_some_and(|u| u.resolved)
    }

    pub fn observation(&self) -> Observation {
        Observation {
            task_description: self.task.description.clone(),
            visible_history: self.history.clone(),
            remaining_orchestrator_steps: self.remaining_steps,
            orchestrator_context_tokens: self.context_tokens,
            unresolved_units: self.units.iter().filter(|u| !u.resolved).count() as u32,
            total_units: self.units.len() as u32,
            live_agents: self.agents.len() as u32,
            last_finish_rate: self.last_finish_rate,
            actions_taken: self.stages.len() as u32,
        }
    }

    /// Answer assembled from everything resolved so far.
    pub fn collected_answer(&self) -> Answer {
        let resolved = self.units.iter().enumerate().filter(|(_, s)| s.resolved).map(|(u, _)| u);
        match &self.task.ground_truth {
            GroundTruth::WideSearch { items } => Answer::Items(
                resolved.map(|u| (items[u].key.clone(), items[u].value.clone())).collect(),
            ),
            GroundTruth::DeepSearch { branches, .. } => {
                let leaves: Vec<&str> = resolved.map(|u| branches[u].leaf.as_str()).collect();
                if leaves.is_empty() {
                    Answer::None
                } else {
                    Answer::Aggregate(aggregate_leaves(&leaves))
                }
            }
            GroundTruth::BatchDownload { files } => {
                Answer::Files(resolved.map(|u| files[u].id.clone()).collect())
            }
        }
    }

    /// Seed for the `index`-th assignment of the next stage.
    pub fn assignment_seed(&self, index: usize) -> u64 {
        derive_seed(&[self.seed, self.stages.len() as u64, index as u64])
    }

    /// Deterministic lookup against the ground truth. Advances resolution
    /// progress; does not record a stage.
    pub fn exec_tool(&mut self, call: &ToolCall) -> Result<ToolResult> {
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        let task = Arc::clone(&self.task);
        let result = match (&task.ground_truth, call.tool) {
            (gt, Tool::Search) => {
                let keys: Vec<String> = (0..gt.unit_count())
                    .map(|u| gt.unit_key(u))
                    .filter(|k| !call.query.is_empty() && k.contains(call.query.as_str()))
                    .map(str::to_string)
                    .collect();
                ToolResult::Candidates { keys }
            }
            (GroundTruth::WideSearch { items }, Tool::Fetch) => {
                match items.iter().position(|i| i.key == call.query) {
                    None => ToolResult::NotFound,
                    Some(u) => {
                        let state = &mut self.units[u];
                        let item = &items[u];
                        if !state.resolved {
                            state.progress += 1;
                            state.resolved = state.progress >= item.sources_required;
                        }
                        if state.resolved {
                            ToolResult::Value { key: item.key.clone(), value: item.value.clone() }
                        } else {
                            ToolResult::Partial {
                                key: item.key.clone(),
                                fetched: state.progress,
                                required: item.sources_required,
                            }
                        }
                    }
                }
            }
            (GroundTruth::DeepSearch { branches, .. }, Tool::Fetch) => {
                let hit = branches.iter().enumerate().find_map(|(b, br)| {
                    br.keys.iter().position(|k| *k == call.query).map(|level| (b, level))
                });
                match hit {
                    // A key is only reachable once the previous link revealed it.
                    Some((b, level)) if level as u32 <= self.units[b].progress => {
                        let br = &branches[b];
                        let state = &mut self.units[b];
                        if level as u32 == state.progress && !state.resolved {
                            state.progress += 1;
                            state.resolved = state.progress as usize == br.keys.len();
                        }
                        match br.keys.get(level + 1) {
                            Some(next) => ToolResult::Link { key: call.query.clone(), next: next.clone() },
                            None => ToolResult::Value { key: call.query.clone(), value: br.leaf.clone() },
                        }
                    }
                    _ => ToolResult::NotFound,
                }
            }
            (GroundTruth::BatchDownload { files }, Tool::Download) => {
                match files.iter().position(|f| f.id == call.query) {
                    None => ToolResult::NotFound,
                    Some(u) => {
                        let state = &mut self.units[u];
                        if !state.resolved {
                            state.progress += 1;
                            state.resolved = state.progress >= files[u].cost;
                        }
                        if state.resolved {
                            ToolResult::Acquired { id: files[u].id.clone() }
                        } else {
                            ToolResult::Downloading {
                                id: files[u].id.clone(),
                                done: state.progress,
                                required: files[u].cost,
                            }
                        }
                    }
                }
            }
            _ => ToolResult::NotFound,
        };
        Ok(result)
    }

    /// Next tool call that makes progress on the given unit.
    pub fn tool_call_for(&self, unit: usize) -> ToolCall {
        let gt = &self.task.ground_truth;
        match gt {
            GroundTruth::WideSearch { .. } => {
                ToolCall { tool: Tool::Fetch, query: gt.unit_key(unit).to_string() }
            }
            GroundTruth::DeepSearch { branches, .. } => {
                let level = (self.units[unit].progress as usize).min(branches[unit].keys.len() - 1);
                ToolCall { tool: Tool::Fetch, query: branches[unit].keys[level].clone() }
            }
            GroundTruth::BatchDownload { .. } => {
                ToolCall { tool: Tool::Download, query: gt.unit_key(unit).to_string() }
            }
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        let stage_index = self.stages.len() as u32;
        let overhead = self.settings.action_tokens;
        let mut error = None;
        let (stage, summary) = match action {
            Action::Tool(call) => {
                let result = self.exec_tool(&call)?;
                let routed = overhead + self.settings.step_tokens;
                let summary = (format!("{:?}({})", call.tool, call.query), format!("{result:?}"));
                (stage_record(stage_index, StageAction::Tool, routed), summary)
            }
            Action::CreateSubagent(profile) => {
                let label = format!("create_subagent({})", profile.name);
                let mut stage = stage_record(stage_index, StageAction::CreateAgent, overhead);
                let outcome = if self.agents.iter().any(|a| a.name == profile.name) {
                    Err(Error::DuplicateAgent(profile.name.clone()))
                } else {
                    profile.validate()
                };
                let result = match outcome {
                    Ok(()) => {
                        self.agents.push(profile);
                        "created".to_string()
                    }
                    Err(e) => {
                        stage.failed = true;
                        let msg = e.to_string();
                        error = Some(e);
                        msg
                    }
                };
                (stage, (label, result))
            }
            Action::AssignTasks(assignments) => {
                if assignments.is_empty() {
                    let mut stage = stage_record(stage_index, StageAction::AssignGroup, overhead);
                    stage.failed = true;
                    error = Some(Error::EmptyGroup);
                    (stage, ("assign_task[]".into(), Error::EmptyGroup.to_string()))
                } else {
                    let (stage, results, err) = self.execute_group(stage_index, &assignments);
                    error = err;
                    let summary = results
                        .iter()
                        .map(|r| format!("{}:{}/{}", r.agent_name, r.payload.len(), r.finished))
                        .collect::<Vec<_>>()
                        .join(" ");
                    (stage, (format!("assign_task x{}", assignments.len()), summary))
                }
            }
            Action::Finish(answer) => {
                self.final_answer = Some(answer);
                self.terminal = Some(TerminalFlag::Finished);
                (
                    stage_record(stage_index, StageAction::Finish, overhead),
                    ("finish".into(), "submitted".into()),
                )
            }
            Action::Noop { reason } => {
                let mut stage = stage_record(stage_index, StageAction::Noop, overhead);
                stage.failed = true;
                (stage, ("noop".into(), reason))
            }
        };
        self.commit_stage(stage, summary);
        Ok(StepOutcome { observation: self.observation(), done: self.is_done(), error })
    }

    /// Runs a group of assignments as one stage and records it.
    pub fn run_parallel_group(&mut self, assignments: &[SubtaskAssignment]) -> Result<Vec<SubtaskResult>> {
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        if assignments.is_empty() {
            return Err(Error::EmptyGroup);
        }
        let stage_index = self.stages.len() as u32;
        let (stage, results, _) = self.execute_group(stage_index, assignments);
        let summary = (format!("assign_task x{}", assignments.len()), format!("{} results", results.len()));
        self.commit_stage(stage, summary);
        Ok(results)
    }

    /// Ends the episode without a Finish action, submitting what was collected.
    pub fn force_terminate(&mut self, flag: TerminalFlag) {
        if self.terminal.is_none() {
            self.final_answer = Some(self.collected_answer());
            self.terminal = Some(flag);
        }
    }

    fn execute_group(
        &mut self,
        stage_index: u32,
        assignments: &[SubtaskAssignment],
    ) -> (StageRecord, Vec<SubtaskResult>, Option<Error>) {
        let mut first_error = None;
        let results: Vec<SubtaskResult> = assignments
            .iter()
            .map(|a| {
                let outcome = match self.agents.iter().find(|p| p.name == a.agent_name) {
                    None => Err(Error::UnknownAgent(a.agent_name.clone())),
                    Some(profile) => run_subagent(profile, a, self),
                };
                outcome.unwrap_or_else(|e| {
                    first_error.get_or_insert(e);
                    SubtaskResult::failed(&a.agent_name)
                })
            })
            .collect();
        for r in &results {
            for &u in &r.resolved {
                self.units[u].resolved = true;
            }
        }
        let completed = results.iter().filter(|r| r.finished).count() as u32;
        let assigned = results.len() as u32;
        self.last_finish_rate = completed as f64 / assigned as f64;
        let routed = self.settings.action_tokens + results.iter().map(|r| r.summary_tokens).sum::<u32>();
        let stage = StageRecord {
            stage_index,
            main_steps: 1,
            sub_steps: results.iter().map(|r| r.steps_used).collect(),
            assigned,
            completed,
            action: StageAction::AssignGroup,
            failed: first_error.is_some(),
            routed_tokens: routed,
        };
        (stage, results, first_error)
    }

    fn commit_stage(&mut self, stage: StageRecord, summary: (String, String)) {
        self.remaining_steps = self.remaining_steps.saturating_sub(stage.main_steps);
        self.context_tokens += stage.routed_tokens as u64;
        self.stages.push(stage);
        self.history.push(summary);
        if self.terminal.is_none() && self.remaining_steps == 0 {
            self.force_terminate(TerminalFlag::BudgetExhausted);
        }
    }
}

fn stage_record(stage_index: u32, action: StageAction, routed_tokens: u32) -> StageRecord {
    StageRecord {
        stage_index,
        main_steps: 1,
        sub_steps: vec![],
        assigned: 0,
        completed: 0,
        action,
        failed: false,
        routed_tokens,
    }
}

/// Simulates a frozen sub-agent on its subtask. Reads the environment,
/// never mutates it; the result depends only on (profile, assignment, task).
pub fn run_subagent(
    profile: &SubagentProfile,
    assignment: &SubtaskAssignment,
    env: &Environment,
) -> Result<SubtaskResult> {
    let task = env.task();
    let units = &assignment.subtask.units;
    if units.is_empty() {
        return Err(Error::InvalidSubtask("empty subtask".into()));
    }
    if let Some(&bad) = units.iter().find(|&&u| u >= task.unit_count()) {
        return Err(Error::InvalidSubtask(format!("unit {bad} does not exist")));
    }
    let limit = task.limits.subagent_max_steps;
    let mut rng = rng_for(&[assignment.seed]);
    let mut steps = 0u32;
    let mut capped = false;
    let mut resolved = Vec::new();
    for &u in units {
        let jitter = if profile.step_cost.jitter > 0 {
            rng.gen_range(0..=profile.step_cost.jitter)
        } else {
            0
        };
        let cost = task.ground_truth.unit_cost(u) * profile.step_cost.multiplier + jitter;
        if steps + cost > limit {
            steps = limit;
            capped = true;
            break;
        }
        steps += cost;
        if rng.gen::<f64>() < profile.competence {
            resolved.push(u);
        }
    }
    let payload: Vec<PayloadEntry> = resolved.iter().map(|&u| payload_entry(&task.ground_truth, u)).collect();
    Ok(SubtaskResult {
        agent_name: assignment.agent_name.clone(),
        steps_used: steps,
        finished: !capped && resolved.len() == units.len(),
        summary_tokens: 1 + payload.len() as u32,
        resolved,
        payload,
    })
}

fn payload_entry(gt: &GroundTruth, unit: usize) -> PayloadEntry {
    let (key, value) = match gt {
        GroundTruth::WideSearch { items } => (items[unit].key.clone(), items[unit].value.clone()),
        GroundTruth::DeepSearch { branches, .. } => (branches[unit].keys[0].clone(), branches[unit].leaf.clone()),
        GroundTruth::BatchDownload { files } => (files[unit].id.clone(), "acquired".into()),
    };
    PayloadEntry { key, value }
}

/// Parameter schemas of the two orchestration tools.
pub fn tool_schemas() -> Value {
    json!([
        {
            "name": "create_subagent",
            "description": "Create a custom subagent with specific system prompt and name for reuse.",
            "parameters": {
                "type": "object",
                "properties": {
                    "name": {
                        "type": "string",
                        "description": "Unique name for this agent configuration"
                    },
                    "system_prompt": {
                        "type": "string",
                        "description": "System prompt defining the agent's role, capabilities, and boundaries"
                    }
                },
                "required": ["name", "system_prompt"]
            }
        },
        {
            "name": "assign_task",
            "description": "Launch a new agent.\nUsage notes:\n1. You can launch multiple agents concurrently whenever possible, to maximize performance;\n2. When the agent is done, it will return a single message back to you.",
            "parameters": {
                "type": "object",
                "properties": {
                    "agent": {
                        "type": "string",
                        "description": "Specify which created agent to use."
                    },
                    "prompt": {
                        "type": "string",
                        "description": "The task for the agent to perform"
                    }
                },
                "required": ["agent", "prompt"]
            }
        }
    ])
}

impl SubagentProfile {
    pub fn to_tool_call(&self) -> Value {
        json!({
            "name": "create_subagent",
            "arguments": { "name": self.name, "system_prompt": self.system_prompt }
        })
    }

    /// Builds a profile from a `create_subagent` call. Behavioral parameters
    /// come from the template of the same name, or the first template.
    pub fn from_tool_call(call: &Value, settings: &EnvSettings) -> Result<Self> {
        let args = tool_arguments(call, "create_subagent")?;
        let name = str_arg(args, "name")?;
        let system_prompt = str_arg(args, "system_prompt")?;
        let base = settings
            .template(name)
            .or_else(|| settings.templates.first())
            .ok_or_else(|| Error::Config("no sub-agent templates".into()))?;
        Ok(SubagentProfile {
            name: name.to_string(),
            system_prompt: system_prompt.to_string(),
            ..base.clone()
        })
    }
}

fn tool_arguments<'a>(call: &'a Value, expected: &str) -> Result<&'a Value> {
    if call.get("name").and_then(Value::as_str) != Some(expected) {
        return Err(Error::invalid_param(format!("expected a `{expected}` call")));
    }
    call.get("arguments")
        .ok_or_else(|| Error::invalid_param("tool call has no arguments"))
}

fn str_arg<'a>(args: &'a Value, field: &str) -> Result<&'a str> {
    args.get(field)
        .and_then(Value::as_str)
        .ok_or_else(|| Error::invalid_param(format!("missing string argument `{field}`")))
}

impl TaskKind {
    /// The tool that makes progress on this task family.
    pub fn work_tool(&self) -> Tool {
        match self {
            TaskKind::WideSearch | TaskKind::DeepSearch => Tool::Fetch,
            TaskKind::BatchDownload => Tool::Download,
        }
    }
}
