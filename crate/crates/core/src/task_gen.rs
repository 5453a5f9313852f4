//! Synthetic verifiable tasks.
//!
//! Three families stress sequential execution in different ways: wide search
//! (many independent items), deep search (independent chains of dependent
//! lookups, aggregated at the end) and batch download (many files, each
//! costing several sequential steps). All generators are pure functions of
//! their arguments.

use rand::distributions::Alphanumeric;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::rng::rng_for;

const TOPICS: &[&str] = &[
    "alloy", "basin", "cipher", "delta", "ember", "fjord", "glyph", "harbor", "island", "jasper",
    "kiln", "lattice", "meadow", "nebula", "orchid", "prism", "quarry", "relay", "summit", "tundra",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    WideSearch,
    DeepSearch,
    BatchDownload,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::WideSearch => "wide_search",
            TaskKind::DeepSearch => "deep_search",
            TaskKind::BatchDownload => "batch_download",
        }
    }

    fn tag(&self) -> u64 {
        match self {
            TaskKind::WideSearch => 1,
            TaskKind::DeepSearch => 2,
            TaskKind::BatchDownload => 3,
        }
    }
}

/// Kind-specific size record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TaskParams {
    WideSearch { n_items: u32, sources_per_item: u32 },
    DeepSearch { depth: u32, branching: u32 },
    BatchDownload { n_files: u32, file_cost: u32 },
}

impl TaskParams {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskParams::WideSearch { .. } => TaskKind::WideSearch,
            TaskParams::DeepSearch { .. } => TaskKind::DeepSearch,
            TaskParams::BatchDownload { .. } => TaskKind::BatchDownload,
        }
    }

    /// Number of independent work units the task decomposes into.
    pub fn unit_count(&self) -> usize {
        match *self {
            TaskParams::WideSearch { n_items, .. } => n_items as usize,
            TaskParams::DeepSearch { branching, .. } => branching as usize,
            TaskParams::BatchDownload { n_files, .. } => n_files as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WideItem {
    pub key: String,
    pub value: String,
    /// Source fetches needed before the value is revealed.
    pub sources_required: u32,
}

/// One chain of dependent lookups. Fetching `keys[i]` reveals `keys[i + 1]`;
/// fetching the last key reveals `leaf`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceBranch {
    pub keys: Vec<String>,
    pub leaf: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub id: String,
    pub cost: u32,
}

/// Hidden answer key. Only the tool simulator and reward code read it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GroundTruth {
    WideSearch { items: Vec<WideItem> },
    DeepSearch { answer: String, branches: Vec<EvidenceBranch> },
    BatchDownload { files: Vec<FileEntry> },
}

impl GroundTruth {
    pub fn unit_count(&self) -> usize {
        match self {
            GroundTruth::WideSearch { items } => items.len(),
            GroundTruth::DeepSearch { branches, .. } => branches.len(),
            GroundTruth::BatchDownload { files } => files.len(),
        }
    }

    /// Sequential tool steps needed to resolve one work unit.
    pub fn unit_cost(&self, unit: usize) -> u32 {
        match self {
            GroundTruth::WideSearch { items } => items[unit].sources_required,
            GroundTruth::DeepSearch { branches, .. } => branches[unit].keys.len() as u32,
            GroundTruth::BatchDownload { files } => files[unit].cost,
        }
    }

    /// Public identifier of a work unit (item key, branch root, file id).
    pub fn unit_key(&self, unit: usize) -> &str {
        match self {
            GroundTruth::WideSearch { items } => &items[unit].key,
            GroundTruth::DeepSearch { branches, .. } => &branches[unit].keys[0],
            GroundTruth::BatchDownload { files } => &files[unit].id,
        }
    }

    pub fn unit_index(&self, key: &str) -> Option<usize> {
        (0..self.unit_count()).find(|&u| self.unit_key(u) == key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLimits {
    pub orchestrator_max_steps: u32,
    pub subagent_max_steps: u32,
    /// Cap on action tokens emitted by the orchestrator in one episode.
    pub max_tokens: u32,
}

impl StepLimits {
    pub fn for_kind(kind: TaskKind) -> Self {
        match kind {
            TaskKind::DeepSearch => StepLimits {
                orchestrator_max_steps: 15,
                subagent_max_steps: 100,
                max_tokens: 15,
            },
            TaskKind::WideSearch | TaskKind::BatchDownload => StepLimits {
                orchestrator_max_steps: 100,
                subagent_max_steps: 100,
                max_tokens: 100,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.orchestrator_max_steps == 0 || self.subagent_max_steps == 0 || self.max_tokens == 0 {
            return Err(Error::InvalidSpec("step limits must be strictly positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub kind: TaskKind,
    pub seed: u64,
    pub params: TaskParams,
    pub description: String,
    pub ground_truth: GroundTruth,
    pub limits: StepLimits,
}

impl TaskSpec {
    pub fn with_limits(mut self, limits: StepLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn unit_count(&self) -> usize {
        self.ground_truth.unit_count()
    }

    /// Checks the structural invariants a generated spec always satisfies.
    pub fn validate(&self) -> Result<()> {
        self.limits.validate()?;
        if self.params.kind() != self.kind {
            return Err(Error::InvalidSpec("params family does not match kind".into()));
        }
        let declared = self.params.unit_count();
        let actual = self.ground_truth.unit_count();
        if declared == 0 || declared != actual {
            return Err(Error::InvalidSpec(format!(
                "ground truth holds {actual} units, params declare {declared}"
            )));
        }
        let mut keys = BTreeSet::new();
        for u in 0..actual {
            if !keys.insert(self.ground_truth.unit_key(u)) {
                return Err(Error::InvalidSpec(format!(
                    "duplicate unit key `{}`",
                    self.ground_truth.unit_key(u)
                )));
            }
        }
        match (&self.params, &self.ground_truth) {
            (
                TaskParams::WideSearch { sources_per_item, .. },
                GroundTruth::WideSearch { items },
            ) => {
                if items
                    .iter()
                    .any(|i| i.sources_required == 0 || i.sources_required > *sources_per_item)
                {
                    return Err(Error::InvalidSpec("item source count out of range".into()));
                }
            }
            (TaskParams::DeepSearch { depth, .. }, GroundTruth::DeepSearch { answer, branches }) => {
                if branches.iter().any(|b| b.keys.len() != *depth as usize) {
                    return Err(Error::InvalidSpec("branch length differs from depth".into()));
                }
                let leaves: Vec<&str> = branches.iter().map(|b| b.leaf.as_str()).collect();
                if aggregate_leaves(&leaves) != *answer {
                    return Err(Error::InvalidSpec("answer is not the aggregate of leaves".into()));
                }
            }
            (TaskParams::BatchDownload { file_cost, .. }, GroundTruth::BatchDownload { files }) => {
                if files.iter().any(|f| f.cost != *file_cost) {
                    return Err(Error::InvalidSpec("file cost differs from params".into()));
                }
            }
            _ => return Err(Error::InvalidSpec("ground truth family does not match kind".into())),
        }
        Ok(())
    }

    /// Wide-search restricted to a subset of items. The result is a valid
    /// task whose ground truth is exactly that subset.
    pub fn restrict(&self, units: &[usize]) -> Result<TaskSpec> {
        let (GroundTruth::WideSearch { items }, TaskParams::WideSearch { sources_per_item, .. }) =
            (&self.ground_truth, &self.params)
        else {
            return Err(Error::invalid_param("only wide-search tasks can be restricted"));
        };
        let picked: BTreeSet<usize> = units.iter().copied().collect();
        if picked.is_empty() || picked.iter().any(|&u| u >= items.len()) {
            return Err(Error::invalid_param("subset must be nonempty and in range"));
        }
        let items: Vec<WideItem> = picked.iter().map(|&u| items[u].clone()).collect();
        let ids: Vec<String> = picked.iter().map(|u| u.to_string()).collect();
        Ok(TaskSpec {
            task_id: format!("{}[{}]", self.task_id, ids.join(",")),
            kind: self.kind,
            seed: self.seed,
            params: TaskParams::WideSearch {
                n_items: items.len() as u32,
                sources_per_item: *sources_per_item,
            },
            description: wide_description(&topic_of(&items), items.len()),
            ground_truth: GroundTruth::WideSearch { items },
            limits: self.limits,
        })
    }
}

/// Order-independent fold over branch leaves: sort, join, hash.
pub fn aggregate_leaves<S: AsRef<str>>(leaves: &[S]) -> String {
    let mut sorted: Vec<&str> = leaves.iter().map(|s| s.as_ref()).collect();
    sorted.sort_unstable();
    let digest = Sha256::digest(sorted.join("|").as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn token(rng: &mut ChaCha8Rng, len: usize) -> String {
    rng.sample_iter(&Alphanumeric)
        .take(len)
        .map(|c| (c as char).to_ascii_lowercase())
        .collect()
}

fn hex_id(rng: &mut ChaCha8Rng) -> String {
    format!("{:012x}", rng.gen::<u64>() & 0xFFFF_FFFF_FFFF)
}

fn topic_of(items: &[WideItem]) -> String {
    items[0].key.split('-').next().unwrap_or_default().to_string()
}

fn wide_description(topic: &str, n: usize) -> String {
    format!("List the recorded value for each of the {n} `{topic}` entries. Entries are independent.")
}

pub fn gen_wide_search(seed: u64, n_items: u32, sources_per_item: u32) -> Result<TaskSpec> {
    if n_items == 0 || sources_per_item == 0 {
        return Err(Error::invalid_param("n_items and sources_per_item must be >= 1"));
    }
    let kind = TaskKind::WideSearch;
    let mut rng = rng_for(&[kind.tag(), seed, n_items as u64, sources_per_item as u64]);
    let topic = TOPICS[rng.gen_range(0..TOPICS.len())];
    let items: Vec<WideItem> = (0..n_items)
        .map(|i| WideItem {
            key: format!("{topic}-{i:04}"),
            value: token(&mut rng, 8),
            sources_required: rng.gen_range(1..=sources_per_item),
        })
        .collect();
    Ok(TaskSpec {
        task_id: format!("wide-s{seed}-n{n_items}-p{sources_per_item}"),
        kind,
        seed,
        params: TaskParams::WideSearch { n_items, sources_per_item },
        description: wide_description(topic, n_items as usize),
        ground_truth: GroundTruth::WideSearch { items },
        limits: StepLimits::for_kind(kind),
    })
}

pub fn gen_deep_search(seed: u64, depth: u32, branching: u32) -> Result<TaskSpec> {
    if depth == 0 || branching == 0 {
        return Err(Error::invalid_param("depth and branching must be >= 1"));
    }
    let kind = TaskKind::DeepSearch;
    let mut rng = rng_for(&[kind.tag(), seed, depth as u64, branching as u64]);
    let branches: Vec<EvidenceBranch> = (0..branching)
        .map(|b| EvidenceBranch {
            keys: (0..depth).map(|d| format!("b{b}-d{d}-{}", token(&mut rng, 6))).collect(),
            leaf: token(&mut rng, 10),
        })
        .collect();
    let leaves: Vec<&str> = branches.iter().map(|b| b.leaf.as_str()).collect();
    let answer = aggregate_leaves(&leaves);
    let roots: Vec<&str> = branches.iter().map(|b| b.keys[0].as_str()).collect();
    Ok(TaskSpec {
        task_id: format!("deep-s{seed}-d{depth}-b{branching}"),
        kind,
        seed,
        params: TaskParams::DeepSearch { depth, branching },
        description: format!(
            "Follow each of the {branching} evidence chains starting at [{}] to its end, then combine the findings.",
            roots.join(", ")
        ),
        ground_truth: GroundTruth::DeepSearch { answer, branches },
        limits: StepLimits::for_kind(kind),
    })
}

pub fn gen_batch_download(seed: u64, n_files: u32, file_cost: u32) -> Result<TaskSpec> {
    if n_files == 0 || file_cost == 0 {
        return Err(Error::invalid_param("n_files and file_cost must be >= 1"));
    }
    let kind = TaskKind::BatchDownload;
    let mut rng = rng_for(&[kind.tag(), seed, n_files as u64, file_cost as u64]);
    let mut seen = BTreeSet::new();
    let mut files = Vec::with_capacity(n_files as usize);
    while files.len() < n_files as usize {
        let id = hex_id(&mut rng);
        if seen.insert(id.clone()) {
            files.push(FileEntry { id, cost: file_cost });
        }
    }
    Ok(TaskSpec {
        task_id: format!("batch-s{seed}-n{n_files}-c{file_cost}"),
        kind,
        seed,
        params: TaskParams::BatchDownload { n_files, file_cost },
        description: format!("Download all {n_files} listed files."),
        ground_truth: GroundTruth::BatchDownload { files },
        limits: StepLimits::for_kind(kind),
    })
}

/// Dispatches on a params record.
pub fn generate(seed: u64, params: TaskParams) -> Result<TaskSpec> {
    match params {
        TaskParams::WideSearch { n_items, sources_per_item } => {
            gen_wide_search(seed, n_items, sources_per_item)
        }
        TaskParams::DeepSearch { depth, branching } => gen_deep_search(seed, depth, branching),
        TaskParams::BatchDownload { n_files, file_cost } => gen_batch_download(seed, n_files, file_cost),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn json(spec: &TaskSpec) -> String {
        serde_json::to_string(spec).unwrap()
    }

    #[test]
    fn wide_search_cardinality_and_determinism() {
        let a = gen_wide_search(7, 40, 2).unwrap();
        let b = gen_wide_search(7, 40, 2).unwrap();
        assert_eq!(a.unit_count(), 40);
        assert_eq!(json(&a), json(&b));
        a.validate().unwrap();
        let GroundTruth::WideSearch { items } = &a.ground_truth else { unreachable!() };
        assert!(items.iter().all(|i| (1..=2).contains(&i.sources_required)));
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(matches!(gen_wide_search(7, 0, 2), Err(Error::InvalidParameter(_))));
        assert!(matches!(gen_wide_search(7, 3, 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(gen_deep_search(3, 0, 2), Err(Error::InvalidParameter(_))));
        assert!(matches!(gen_deep_search(3, 2, 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(gen_batch_download(1, 0, 1), Err(Error::InvalidParameter(_))));
        assert!(matches!(gen_batch_download(1, 1, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn degenerate_deep_search_answer_is_the_leaf_aggregate() {
        let spec = gen_deep_search(3, 1, 1).unwrap();
        let GroundTruth::DeepSearch { answer, branches } = &spec.ground_truth else { unreachable!() };
        assert_eq!(branches.len(), 1);
        assert_eq!(branches[0].keys.len(), 1);
        assert_eq!(*answer, aggregate_leaves(&[branches[0].leaf.as_str()]));
    }

    #[test]
    fn deep_search_lookup_count() {
        let spec = gen_deep_search(3, 4, 5).unwrap();
        // Count lookups by walking the evidence tree.
        let GroundTruth::DeepSearch { branches, .. } = &spec.ground_truth else { unreachable!() };
        let lookups: usize = branches.iter().map(|b| b.keys.len()).sum();
        assert_eq!(lookups, 20);
        let by_cost: u32 = (0..spec.unit_count()).map(|u| spec.ground_truth.unit_cost(u)).sum();
        assert_eq!(by_cost, 20);
        assert_eq!(json(&spec), json(&gen_deep_search(3, 4, 5).unwrap()));
    }

    #[test]
    fn aggregation_is_order_independent() {
        assert_eq!(aggregate_leaves(&["a", "b", "c"]), aggregate_leaves(&["c", "a", "b"]));
        assert_ne!(aggregate_leaves(&["a", "b"]), aggregate_leaves(&["a", "c"]));
    }

    #[test]
    fn batch_download_lower_bound() {
        let spec = gen_batch_download(1, 8, 3).unwrap();
        let total: u32 = (0..8).map(|u| spec.ground_truth.unit_cost(u)).sum();
        assert_eq!(total, 24);
        let single = gen_batch_download(1, 1, 1).unwrap();
        assert_eq!(single.ground_truth.unit_cost(0), 1);
        assert_eq!(single.unit_count(), 1);
    }

    #[test]
    fn batch_download_seeds_give_distinct_file_sets() {
        let ids = |seed| -> BTreeSet<String> {
            let GroundTruth::BatchDownload { files } = gen_batch_download(seed, 8, 3).unwrap().ground_truth
            else {
                unreachable!()
            };
            files.into_iter().map(|f| f.id).collect()
        };
        let distinct = (0..100u64).filter(|&s| ids(2 * s) != ids(2 * s + 1)).count();
        assert!(distinct as f64 / 100.0 >= 0.99, "distinct pairs: {distinct}");
    }

    #[test]
    fn default_limits() {
        assert_eq!(gen_deep_search(0, 2, 2).unwrap().limits.orchestrator_max_steps, 15);
        let wide = gen_wide_search(0, 2, 2).unwrap().limits;
        assert_eq!(wide.orchestrator_max_steps, 100);
        assert_eq!(wide.subagent_max_steps, 100);
    }

    #[test]
    fn validate_catches_cardinality_mismatch() {
        let mut spec = gen_wide_search(7, 5, 1).unwrap();
        spec.params = TaskParams::WideSearch { n_items: 6, sources_per_item: 1 };
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn json_field_names() {
        let v: serde_json::Value = serde_json::to_value(gen_wide_search(1, 2, 1).unwrap()).unwrap();
        for field in ["task_id", "kind", "seed", "params", "ground_truth", "limits"] {
            assert!(v.get(field).is_some(), "missing {field}");
        }
        assert_eq!(v["kind"], "wide_search");
        assert_eq!(v["params"]["n_items"], 2);
        assert_eq!(v["limits"]["orchestrator_max_steps"], 100);
    }

    proptest! {
        #[test]
        fn generators_are_deterministic_and_sound(seed in any::<u64>(), a in 1u32..30, b in 1u32..6) {
            for p in [
                TaskParams::WideSearch { n_items: a, sources_per_item: b },
                TaskParams::DeepSearch { depth: b, branching: a },
                TaskParams::BatchDownload { n_files: a, file_cost: b },
            ] {
                let x = generate(seed, p).unwrap();
                let y = generate(seed, p).unwrap();
                prop_assert_eq!(json(&x), json(&y));
                prop_assert_eq!(x.unit_count(), p.unit_count());
                prop_assert!(x.validate().is_ok());
            }
        }

        #[test]
        fn wide_search_restriction_is_a_valid_subtask(
            seed in any::<u64>(),
            mask in proptest::collection::vec(any::<bool>(), 12),
        ) {
            let spec = gen_wide_search(seed, 12, 3).unwrap();
            let subset: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
            prop_assume!(!subset.is_empty());
            let sub = spec.restrict(&subset).unwrap();
            prop_assert!(sub.validate().is_ok());
            let (GroundTruth::WideSearch { items: full }, GroundTruth::WideSearch { items: part }) =
                (&spec.ground_truth, &sub.ground_truth) else { unreachable!() };
            let expected: Vec<WideItem> = subset.iter().map(|&i| full[i].clone()).collect();
            prop_assert_eq!(part, &expected);
        }
    }
}
