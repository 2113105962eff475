//! Core data model: task taxonomy, generation parameters, answers, the
//! default parameter grids, snapshot expansion, and JSONL serialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Seed, TokenBudget};
use crate::tasks::{self, GenError};

pub const SCHEMA_VERSION: u32 = 1;

/// Capability category a task probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Search,
    RecallEdit,
    MatchCompare,
    SpotDifferences,
    SetsLists,
    StatefulProcessing,
    DataBlocks,
    CompositeStateTracking,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Search,
        Category::RecallEdit,
        Category::MatchCompare,
        Category::SpotDifferences,
        Category::SetsLists,
        Category::StatefulProcessing,
        Category::DataBlocks,
        Category::CompositeStateTracking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Search => "search",
            Category::RecallEdit => "recall_edit",
            Category::MatchCompare => "match_compare",
            Category::SpotDifferences => "spot_differences",
            Category::SetsLists => "sets_lists",
            Category::StatefulProcessing => "stateful_processing",
            Category::DataBlocks => "data_blocks",
            Category::CompositeStateTracking => "composite_state_tracking",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Category::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scoring rule applied to a task's responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    ExactMatch,
    RougeL,
    RougeLRecall,
    Jaccard,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::ExactMatch => "exact_match",
            MetricKind::RougeL => "rouge_l",
            MetricKind::RougeLRecall => "rouge_l_recall",
            MetricKind::Jaccard => "jaccard",
        }
    }
}

/// One of the 24 probe types, in canonical expansion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    StringSearchWord,
    StringSearchSeq,
    KeyValueSearch,
    BatchSearch,
    SnapshotWords,
    ReplaceAll,
    OverwritePositions,
    SnapshotNumbers,
    FunctionalUpdates,
    ComparePositions,
    FindDuplicates,
    Count,
    CheckAssociation,
    CompareTwoLists,
    IdentifyOddGroup,
    PatchDifference,
    GroupMembership,
    GroupAssociation,
    GroupAssociationAlternating,
    Iterate,
    QuantityState,
    SetState,
    DataBlocks,
    TheoryOfMind,
}

impl Task {
    pub const ALL: [Task; 24] = [
        Task::StringSearchWord,
        Task::StringSearchSeq,
        Task::KeyValueSearch,
        Task::BatchSearch,
        Task::SnapshotWords,
        Task::ReplaceAll,
        Task::OverwritePositions,
        Task::SnapshotNumbers,
        Task::FunctionalUpdates,
        Task::ComparePositions,
        Task::FindDuplicates,
        Task::Count,
        Task::CheckAssociation,
        Task::CompareTwoLists,
        Task::IdentifyOddGroup,
        Task::PatchDifference,
        Task::GroupMembership,
        Task::GroupAssociation,
        Task::GroupAssociationAlternating,
        Task::Iterate,
        Task::QuantityState,
        Task::SetState,
        Task::DataBlocks,
        Task::TheoryOfMind,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::StringSearchWord => "string_search_word",
            Task::StringSearchSeq => "string_search_seq",
            Task::KeyValueSearch => "key_value_search",
            Task::BatchSearch => "batch_search",
            Task::SnapshotWords => "snapshot_words",
            Task::ReplaceAll => "replace_all",
            Task::OverwritePositions => "overwrite_positions",
            Task::SnapshotNumbers => "snapshot_numbers",
            Task::FunctionalUpdates => "functional_updates",
            Task::ComparePositions => "compare_positions",
            Task::FindDuplicates => "find_duplicates",
            Task::Count => "count",
            Task::CheckAssociation => "check_association",
            Task::CompareTwoLists => "compare_two_lists",
            Task::IdentifyOddGroup => "identify_odd_group",
            Task::PatchDifference => "patch_difference",
            Task::GroupMembership => "group_membership",
            Task::GroupAssociation => "group_association",
            Task::GroupAssociationAlternating => "group_association_alternating",
            Task::Iterate => "iterate",
            Task::QuantityState => "quantity_state",
            Task::SetState => "set_state",
            Task::DataBlocks => "data_blocks",
            Task::TheoryOfMind => "theory_of_mind",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Task::ALL.into_iter().find(|t| t.name() == s)
    }

    /// Total task-to-category mapping.
    pub fn category(self) -> Category {
        match self {
            Task::StringSearchWord
            | Task::StringSearchSeq
            | Task::KeyValueSearch
            | Task::BatchSearch => Category::Search,
            Task::SnapshotWords
            | Task::ReplaceAll
            | Task::OverwritePositions
            | Task::SnapshotNumbers
            | Task::FunctionalUpdates => Category::RecallEdit,
            Task::ComparePositions
            | Task::FindDuplicates
            | Task::Count
            | Task::CheckAssociation => Category::MatchCompare,
            Task::CompareTwoLists | Task::IdentifyOddGroup | Task::PatchDifference => {
                Category::SpotDifferences
            }
            Task::GroupMembership
            | Task::GroupAssociation
            | Task::GroupAssociationAlternating
            | Task::Iterate => Category::SetsLists,
            Task::QuantityState | Task::SetState => Category::StatefulProcessing,
            Task::DataBlocks => Category::DataBlocks,
            Task::TheoryOfMind => Category::CompositeStateTracking,
        }
    }

    /// Total task-to-metric mapping.
    pub fn metric(self) -> MetricKind {
        match self {
            Task::StringSearchWord
            | Task::StringSearchSeq
            | Task::KeyValueSearch
            | Task::ComparePositions
            | Task::FindDuplicates
            | Task::Count
            | Task::CheckAssociation
            | Task::IdentifyOddGroup
            | Task::PatchDifference
            | Task::GroupMembership
            | Task::GroupAssociation
            | Task::GroupAssociationAlternating
            | Task::QuantityState => MetricKind::ExactMatch,
            Task::BatchSearch | Task::CompareTwoLists => MetricKind::RougeLRecall,
            Task::SnapshotWords
            | Task::SnapshotNumbers
            | Task::ReplaceAll
            | Task::OverwritePositions
            | Task::FunctionalUpdates
            | Task::Iterate
            | Task::DataBlocks => MetricKind::RougeL,
            Task::SetState | Task::TheoryOfMind => MetricKind::Jaccard,
        }
    }

    /// Context length for these tasks is driven by the operation step count,
    /// not the token budget.
    pub fn is_step_driven(self) -> bool {
        matches!(
            self,
            Task::QuantityState | Task::SetState | Task::TheoryOfMind
        )
    }

    /// Parameter fields a grid setting may populate for this task.
    pub fn allowed_fields(self) -> &'static [&'static str] {
        match self {
            Task::StringSearchWord => &["token_budget", "query_depth", "label"],
            Task::StringSearchSeq => &["token_budget", "sequence_length", "label", "query_depth"],
            Task::KeyValueSearch => &["token_budget", "query_depth"],
            Task::BatchSearch => &["token_budget", "batch_size"],
            Task::SnapshotWords | Task::SnapshotNumbers => &["token_budget"],
            Task::ReplaceAll => &["token_budget", "density", "replacement"],
            Task::OverwritePositions => &["token_budget", "nth", "replacement"],
            Task::FunctionalUpdates => &["token_budget", "function"],
            Task::ComparePositions => &[
                "token_budget",
                "query_depth",
                "query_depth_2",
                "collision_shifted",
            ],
            Task::FindDuplicates | Task::Count => &["token_budget", "repetition"],
            Task::CheckAssociation => &["token_budget", "n_attributes", "label"],
            Task::CompareTwoLists => &["token_budget", "num_diff_words", "chosen_list"],
            Task::IdentifyOddGroup => &["token_budget", "words_per_group", "pct_difference"],
            Task::PatchDifference => &["token_budget", "pattern_length", "cutoff_depth", "nth"],
            Task::GroupMembership => &["token_budget", "num_groups", "query_depth"],
            Task::GroupAssociation => &["token_budget", "num_groups", "label"],
            Task::GroupAssociationAlternating => {
                &["token_budget", "num_groups", "num_turns", "label"]
            }
            Task::Iterate => &["token_budget", "num_groups"],
            Task::QuantityState => &["num_steps"],
            Task::SetState => &["num_steps", "set_size"],
            Task::DataBlocks => &["token_budget", "num_blocks", "num_turns"],
            Task::TheoryOfMind => &["num_steps", "num_agents", "set_size"],
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Expected answer polarity for binary tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        }
    }
}

/// The `y` of replace/overwrite edits: a concrete word or deletion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Replacement {
    Word,
    Delete,
}

impl Replacement {
    pub fn name(self) -> &'static str {
        match self {
            Replacement::Word => "word",
            Replacement::Delete => "null",
        }
    }
}

/// Elementwise numeric update for functional edits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateFn {
    Add(i64),
    Subtract(i64),
    Multiply(i64),
}

impl UpdateFn {
    pub fn apply(self, x: i64) -> i64 {
        match self {
            UpdateFn::Add(n) => x + n,
            UpdateFn::Subtract(n) => x - n,
            UpdateFn::Multiply(n) => x * n,
        }
    }

    pub fn short_name(self) -> String {
        match self {
            UpdateFn::Add(n) => format!("add{n}"),
            UpdateFn::Subtract(n) => format!("sub{n}"),
            UpdateFn::Multiply(n) => format!("mul{n}"),
        }
    }
}

/// Which of the two lists the difference is reported from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChosenList {
    First,
    Second,
}

impl ChosenList {
    pub fn name(self) -> &'static str {
        match self {
            ChosenList::First => "first",
            ChosenList::Second => "second",
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_default_variant(v: &u32) -> bool {
    *v == 1
}

fn default_variant() -> u32 {
    1
}

/// Per-case generation parameters. Only the fields relevant to a task are
/// set; expansion rejects extraneous ones. Generators may record realized
/// values (e.g. the placement actually used) back into their case's params.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GenParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_budget: Option<TokenBudget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_depth_2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement: Option<Replacement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<UpdateFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetition: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_attributes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_diff_words: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_list: Option<ChosenList>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words_per_group: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pct_difference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff_depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_groups: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_turns: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_blocks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_agents: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision_shifted: Option<bool>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub gibberish: bool,
    #[serde(
        default = "default_variant",
        skip_serializing_if = "is_default_variant"
    )]
    pub prompt_variant: u32,
}

impl GenParams {
    pub fn new() -> Self {
        Self {
            prompt_variant: 1,
            ..Default::default()
        }
    }

    /// Names of the Option fields currently set.
    pub fn set_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        macro_rules! probe {
            ($($field:ident),+ $(,)?) => {
                $(if self.$field.is_some() { out.push(stringify!($field)); })+
            };
        }
        probe!(
            token_budget,
            query_depth,
            query_depth_2,
            label,
            sequence_length,
            batch_size,
            density,
            nth,
            replacement,
            function,
            repetition,
            n_attributes,
            num_diff_words,
            chosen_list,
            words_per_group,
            pct_difference,
            pattern_length,
            cutoff_depth,
            num_groups,
            num_turns,
            num_steps,
            set_size,
            num_blocks,
            num_agents,
            collision_shifted,
        );
        out
    }

    fn validate_for(&self, task: Task) -> Result<(), ExpandError> {
        let allowed = task.allowed_fields();
        for field in self.set_fields() {
            if !allowed.contains(&field) {
                return Err(ExpandError::ExtraneousParam {
                    task,
                    field: field.to_string(),
                });
            }
        }
        for frac in [
            self.query_depth,
            self.query_depth_2,
            self.density,
            self.pct_difference,
            self.cutoff_depth,
        ]
        .into_iter()
        .flatten()
        {
            if !(0.0..=1.0).contains(&frac) {
                return Err(ExpandError::BadFraction { task, value: frac });
            }
        }
        for count in [
            self.sequence_length,
            self.batch_size,
            self.nth,
            self.repetition,
            self.n_attributes,
            self.num_diff_words,
            self.words_per_group,
            self.pattern_length,
            self.num_groups,
            self.num_turns,
            self.num_steps,
            self.set_size,
            self.num_blocks,
            self.num_agents,
        ]
        .into_iter()
        .flatten()
        {
            if count == 0 {
                return Err(ExpandError::BadCount { task });
            }
        }
        Ok(())
    }
}

/// Reference or extracted answer, tagged by shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Answer {
    Binary(bool),
    Text(String),
    OrderedList(Vec<String>),
    WordSet(BTreeSet<String>),
    Integer(i64),
    AgentSets(BTreeMap<String, BTreeSet<String>>),
}

impl Answer {
    /// The canonical rendering used by the oracle mock model and by the
    /// identity property of the scorers.
    pub fn canonical_text(&self) -> String {
        match self {
            Answer::Binary(true) => "yes".to_string(),
            Answer::Binary(false) => "no".to_string(),
            Answer::Text(s) => s.clone(),
            Answer::OrderedList(ws) => ws.join(", "),
            Answer::WordSet(ws) => ws.iter().cloned().collect::<Vec<_>>().join(", "),
            Answer::Integer(n) => n.to_string(),
            Answer::AgentSets(m) => m
                .iter()
                .map(|(agent, items)| {
                    if items.is_empty() {
                        format!("{agent}:")
                    } else {
                        format!(
                            "{agent}: {}",
                            items.iter().cloned().collect::<Vec<_>>().join(", ")
                        )
                    }
                })
                .collect::<Vec<_>>()
                .join("; "),
        }
    }
}

/// One generated probe.
#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub id: String,
    pub task: Task,
    pub params: GenParams,
    pub context_text: String,
    pub instruction_text: String,
    pub reference: Answer,
    pub metric: MetricKind,
    pub seed: Seed,
}

/// Declared parameter grid for one task: settings in canonical order, each
/// expanded `samples` times.
#[derive(Debug, Clone)]
pub struct TaskGrid {
    pub task: Task,
    pub settings: Vec<GenParams>,
    pub samples: usize,
}

/// The full recipe for a snapshot.
#[derive(Debug, Clone)]
pub struct SnapshotConfig {
    pub master_seed: u64,
    pub gibberish: bool,
    pub prompt_variant: u32,
    pub grids: Vec<TaskGrid>,
}

/// Knobs for building a [`SnapshotConfig`] from the default grids.
#[derive(Debug, Clone)]
pub struct SnapshotOptions {
    pub master_seed: u64,
    pub context_tokens: usize,
    pub gibberish: bool,
    pub prompt_variant: u32,
    pub steps_override: Option<usize>,
    pub category: Option<Category>,
    pub task: Option<Task>,
}

impl Default for SnapshotOptions {
    fn default() -> Self {
        Self {
            master_seed: 0,
            context_tokens: 4000,
            gibberish: false,
            prompt_variant: 1,
            steps_override: None,
            category: None,
            task: None,
        }
    }
}

pub const DEFAULT_CONTEXT_TOKENS: usize = 4000;
pub const QUANTITY_STATE_STEPS: usize = 200;
pub const SET_STATE_STEPS: usize = 100;
pub const THEORY_OF_MIND_STEPS: usize = 100;
/// Per-agent held-item cap for the multi-agent tracking task.
pub const AGENT_SET_CAP: usize = 10;

pub const QUERY_DEPTH_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const SEQUENCE_LENGTH_GRID: [usize; 4] = [8, 16, 32, 64];
pub const BATCH_SIZE_GRID: [usize; 4] = [4, 8, 16, 32];
pub const DENSITY_GRID: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
pub const NTH_GRID: [usize; 3] = [2, 3, 4];
pub const FUNCTION_GRID: [UpdateFn; 3] = [
    UpdateFn::Add(3),
    UpdateFn::Subtract(1),
    UpdateFn::Multiply(2),
];
pub const REPETITION_GRID: [usize; 5] = [2, 4, 8, 16, 32];
pub const N_ATTRIBUTES_GRID: [usize; 5] = [2, 4, 8, 16, 32];
pub const NUM_DIFF_GRID: [usize; 4] = [1, 5, 10, 20];
pub const WORDS_PER_GROUP_GRID: [usize; 4] = [25, 50, 75, 100];
pub const PCT_DIFFERENCE_GRID: [f64; 3] = [0.0, 0.25, 0.5];
pub const PATTERN_LENGTH_GRID: [usize; 3] = [2, 15, 30];
pub const CUTOFF_DEPTH_GRID: [f64; 3] = [0.0, 0.5, 1.0];
pub const PATCH_NTH_GRID: [usize; 3] = [1, 3, 6];
pub const NUM_GROUPS_GRID: [usize; 4] = [4, 8, 16, 32];
pub const ALT_NUM_GROUPS_GRID: [usize; 5] = [2, 4, 8, 16, 32];
pub const SET_SIZE_GRID: [usize; 4] = [5, 10, 15, 20];
pub const NUM_BLOCKS_GRID: [usize; 5] = [2, 4, 8, 16, 32];
pub const NUM_AGENTS_GRID: [usize; 3] = [2, 3, 4];
pub const GROUP_TURNS: usize = 10;

/// The default snapshot recipe: seed 0, 4k-token contexts, the full grids.
pub fn default_config() -> SnapshotConfig {
    SnapshotConfig::build(&SnapshotOptions::default())
}

impl SnapshotConfig {
    pub fn build(opts: &SnapshotOptions) -> SnapshotConfig {
        let budget = TokenBudget::new(opts.context_tokens);
        let mut grids = Vec::new();

        let labels = [Label::Positive, Label::Negative];

        for task in Task::ALL {
            if let Some(only) = opts.task {
                if task != only {
                    continue;
                }
            }
            if let Some(cat) = opts.category {
                if task.category() != cat {
                    continue;
                }
            }

            let mut settings = Vec::new();
            let base = || {
                let mut p = GenParams::new();
                if !task.is_step_driven() {
                    p.token_budget = Some(budget);
                }
                p
            };
            let samples = match task {
                Task::StringSearchWord => {
                    for depth in QUERY_DEPTH_GRID {
                        for label in labels {
                            let mut p = base();
                            p.query_depth = Some(depth);
                            p.label = Some(label);
                            settings.push(p);
                        }
                    }
                    5
                }
                Task::StringSearchSeq => {
                    for len in SEQUENCE_LENGTH_GRID {
                        for label in labels {
                            let mut p = base();
                            p.sequence_length = Some(len);
                            p.label = Some(label);
                            settings.push(p);
                        }
                    }
                    10
                }
                Task::KeyValueSearch => {
                    for depth in QUERY_DEPTH_GRID {
                        let mut p = base();
                        p.query_depth = Some(depth);
                        settings.push(p);
                    }
                    10
                }
                Task::BatchSearch => {
                    for batch in BATCH_SIZE_GRID {
                        let mut p = base();
                        p.batch_size = Some(batch);
                        settings.push(p);
                    }
                    5
                }
                Task::SnapshotWords | Task::SnapshotNumbers => {
                    settings.push(base());
                    10
                }
                Task::ReplaceAll => {
                    for density in DENSITY_GRID {
                        for repl in [Replacement::Word, Replacement::Delete] {
                            let mut p = base();
                            p.density = Some(density);
                            p.replacement = Some(repl);
                            settings.push(p);
                        }
                    }
                    5
                }
                Task::OverwritePositions => {
                    for nth in NTH_GRID {
                        for repl in [Replacement::Word, Replacement::Delete] {
                            let mut p = base();
                            p.nth = Some(nth);
                            p.replacement = Some(repl);
                            settings.push(p);
                        }
                    }
                    5
                }
                Task::FunctionalUpdates => {
                    for f in FUNCTION_GRID {
                        let mut p = base();
                        p.function = Some(f);
                        settings.push(p);
                    }
                    5
                }
                Task::ComparePositions => {
                    for d1 in QUERY_DEPTH_GRID {
                        for d2 in QUERY_DEPTH_GRID {
                            let mut p = base();
                            p.query_depth = Some(d1);
                            p.query_depth_2 = Some(d2);
                            settings.push(p);
                        }
                    }
                    3
                }
                Task::FindDuplicates | Task::Count => {
                    for rep in REPETITION_GRID {
                        let mut p = base();
                        p.repetition = Some(rep);
                        settings.push(p);
                    }
                    5
                }
                Task::CheckAssociation => {
                    for n in N_ATTRIBUTES_GRID {
                        for label in labels {
                            let mut p = base();
                            p.n_attributes = Some(n);
                            p.label = Some(label);
                            settings.push(p);
                        }
                    }
                    5
                }
                Task::CompareTwoLists => {
                    for diff in NUM_DIFF_GRID {
                        for chosen in [ChosenList::First, ChosenList::Second] {
                            let mut p = base();
                            p.num_diff_words = Some(diff);
                            p.chosen_list = Some(chosen);
                            settings.push(p);
                        }
                    }
                    10
                }
                Task::IdentifyOddGroup => {
                    for wpg in WORDS_PER_GROUP_GRID {
                        for pct in PCT_DIFFERENCE_GRID {
                            let mut p = base();
                            p.words_per_group = Some(wpg);
                            p.pct_difference = Some(pct);
                            settings.push(p);
                        }
                    }
                    5
                }
                Task::PatchDifference => {
                    // Pattern length 2 admits only two distinct cutoffs.
                    for plen in PATTERN_LENGTH_GRID {
                        let cutoffs: &[f64] = if plen == 2 {
                            &[0.0, 1.0]
                        } else {
                            &CUTOFF_DEPTH_GRID
                        };
                        for &cut in cutoffs {
                            for nth in PATCH_NTH_GRID {
                                let mut p = base();
                                p.pattern_length = Some(plen);
                                p.cutoff_depth = Some(cut);
                                p.nth = Some(nth);
                                settings.push(p);
                            }
                        }
                    }
                    5
                }
                Task::GroupMembership => {
                    for groups in NUM_GROUPS_GRID {
                        for depth in QUERY_DEPTH_GRID {
                            let mut p = base();
                            p.num_groups = Some(groups);
                            p.query_depth = Some(depth);
                            settings.push(p);
                        }
                    }
                    5
                }
                Task::GroupAssociation => {
                    for groups in NUM_GROUPS_GRID {
                        for label in labels {
                            let mut p = base();
                            p.num_groups = Some(groups);
                            p.label = Some(label);
                            settings.push(p);
                        }
                    }
                    5
                }
                Task::GroupAssociationAlternating => {
                    for groups in ALT_NUM_GROUPS_GRID {
                        for label in labels {
                            let mut p = base();
                            p.num_groups = Some(groups);
                            p.num_turns = Some(GROUP_TURNS);
                            p.label = Some(label);
                            settings.push(p);
                        }
                    }
                    5
                }
                Task::Iterate => {
                    for groups in NUM_GROUPS_GRID {
                        let mut p = base();
                        p.num_groups = Some(groups);
                        settings.push(p);
                    }
                    5
                }
                Task::QuantityState => {
                    let mut p = base();
                    p.num_steps = Some(opts.steps_override.unwrap_or(QUANTITY_STATE_STEPS));
                    settings.push(p);
                    10
                }
                Task::SetState => {
                    for size in SET_SIZE_GRID {
                        let mut p = base();
                        p.num_steps = Some(opts.steps_override.unwrap_or(SET_STATE_STEPS));
                        p.set_size = Some(size);
                        settings.push(p);
                    }
                    10
                }
                Task::DataBlocks => {
                    for blocks in NUM_BLOCKS_GRID {
                        let mut p = base();
                        p.num_blocks = Some(blocks);
                        p.num_turns = Some(GROUP_TURNS);
                        settings.push(p);
                    }
                    10
                }
                Task::TheoryOfMind => {
                    for agents in NUM_AGENTS_GRID {
                        let mut p = base();
                        p.num_steps = Some(opts.steps_override.unwrap_or(THEORY_OF_MIND_STEPS));
                        p.num_agents = Some(agents);
                        p.set_size = Some(AGENT_SET_CAP);
                        settings.push(p);
                    }
                    20
                }
            };
            grids.push(TaskGrid {
                task,
                settings,
                samples,
            });
        }

        SnapshotConfig {
            master_seed: opts.master_seed,
            gibberish: opts.gibberish,
            prompt_variant: opts.prompt_variant,
            grids,
        }
    }

    pub fn total_cases(&self) -> usize {
        self.grids
            .iter()
            .map(|g| g.settings.len() * g.samples)
            .sum()
    }
}

/// The grid-axis values that identify a setting, in declared order.
/// Shared by case ids and the report's parameter breakdowns.
pub fn grid_axes(task: Task, params: &GenParams) -> Vec<(&'static str, String)> {
    fn frac(v: f64) -> String {
        format!("{v}")
    }
    let mut axes = Vec::new();
    match task {
        Task::StringSearchWord => {
            if let Some(d) = params.query_depth {
                axes.push(("depth", frac(d)));
            }
            if let Some(l) = params.label {
                axes.push(("label", l.name().to_string()));
            }
        }
        Task::StringSearchSeq => {
            if let Some(n) = params.sequence_length {
                axes.push(("seqlen", n.to_string()));
            }
            if let Some(l) = params.label {
                axes.push(("label", l.name().to_string()));
            }
        }
        Task::KeyValueSearch => {
            if let Some(d) = params.query_depth {
                axes.push(("depth", frac(d)));
            }
        }
        Task::BatchSearch => {
            if let Some(b) = params.batch_size {
                axes.push(("batch", b.to_string()));
            }
        }
        Task::SnapshotWords | Task::SnapshotNumbers => {}
        Task::ReplaceAll => {
            if let Some(d) = params.density {
                axes.push(("density", frac(d)));
            }
            if let Some(r) = params.replacement {
                axes.push(("y", r.name().to_string()));
            }
        }
        Task::OverwritePositions => {
            if let Some(n) = params.nth {
                axes.push(("nth", n.to_string()));
            }
            if let Some(r) = params.replacement {
                axes.push(("y", r.name().to_string()));
            }
        }
        Task::FunctionalUpdates => {
            if let Some(f) = params.function {
                axes.push(("f", f.short_name()));
            }
        }
        Task::ComparePositions => {
            if let Some(d) = params.query_depth {
                axes.push(("d1", frac(d)));
            }
            if let Some(d) = params.query_depth_2 {
                axes.push(("d2", frac(d)));
            }
        }
        Task::FindDuplicates | Task::Count => {
            if let Some(r) = params.repetition {
                axes.push(("rep", r.to_string()));
            }
        }
        Task::CheckAssociation => {
            if let Some(n) = params.n_attributes {
                axes.push(("attrs", n.to_string()));
            }
            if let Some(l) = params.label {
                axes.push(("label", l.name().to_string()));
            }
        }
        Task::CompareTwoLists => {
            if let Some(d) = params.num_diff_words {
                axes.push(("diff", d.to_string()));
            }
            if let Some(c) = params.chosen_list {
                axes.push(("chosen", c.name().to_string()));
            }
        }
        Task::IdentifyOddGroup => {
            if let Some(w) = params.words_per_group {
                axes.push(("wpg", w.to_string()));
            }
            if let Some(p) = params.pct_difference {
                axes.push(("pct", frac(p)));
            }
        }
        Task::PatchDifference => {
            if let Some(l) = params.pattern_length {
                axes.push(("plen", l.to_string()));
            }
            if let Some(c) = params.cutoff_depth {
                axes.push(("cut", frac(c)));
            }
            if let Some(n) = params.nth {
                axes.push(("nth", n.to_string()));
            }
        }
        Task::GroupMembership => {
            if let Some(g) = params.num_groups {
                axes.push(("groups", g.to_string()));
            }
            if let Some(d) = params.query_depth {
                axes.push(("depth", frac(d)));
            }
        }
        Task::GroupAssociation | Task::GroupAssociationAlternating => {
            if let Some(g) = params.num_groups {
                axes.push(("groups", g.to_string()));
            }
            if let Some(l) = params.label {
                axes.push(("label", l.name().to_string()));
            }
        }
        Task::Iterate => {
            if let Some(g) = params.num_groups {
                axes.push(("groups", g.to_string()));
            }
        }
        Task::QuantityState => {
            if let Some(s) = params.num_steps {
                axes.push(("steps", s.to_string()));
            }
        }
        Task::SetState => {
            if let Some(s) = params.num_steps {
                axes.push(("steps", s.to_string()));
            }
            if let Some(s) = params.set_size {
                axes.push(("size", s.to_string()));
            }
        }
        Task::DataBlocks => {
            if let Some(b) = params.num_blocks {
                axes.push(("blocks", b.to_string()));
            }
        }
        Task::TheoryOfMind => {
            if let Some(a) = params.num_agents {
                axes.push(("agents", a.to_string()));
            }
            if let Some(s) = params.num_steps {
                axes.push(("steps", s.to_string()));
            }
        }
    }
    axes
}

/// Canonical `key=value` tuple for a setting; `-` when the task has no axes.
pub fn grid_tuple(task: Task, params: &GenParams) -> String {
    let axes = grid_axes(task, params);
    if axes.is_empty() {
        "-".to_string()
    } else {
        axes.iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, Error)]
pub enum ExpandError {
    #[error("{task}: extraneous parameter `{field}` for this task")]
    ExtraneousParam { task: Task, field: String },
    #[error("{task}: fraction parameter {value} outside [0, 1]")]
    BadFraction { task: Task, value: f64 },
    #[error("{task}: zero-valued count parameter")]
    BadCount { task: Task },
    #[error("{task} [{tuple} sample {sample}]: {source}")]
    Generation {
        task: Task,
        tuple: String,
        sample: usize,
        source: GenError,
    },
}

/// Expand a config into concrete cases, in canonical order: tasks as
/// declared, grid settings as declared, sample index ascending.
pub fn expand_snapshot(config: &SnapshotConfig) -> Result<Vec<TestCase>, ExpandError> {
    let dictionary = crate::corpus::Vocabulary::builtin();
    let vocab = if config.gibberish {
        dictionary.gibberish()
    } else {
        dictionary
    };
    let root = Seed::new(config.master_seed);
    let mut cases = Vec::with_capacity(config.total_cases());
    for grid in &config.grids {
        for setting in &grid.settings {
            setting.validate_for(grid.task)?;
            let tuple = grid_tuple(grid.task, setting);
            for sample in 0..grid.samples {
                let mut params = setting.clone();
                params.gibberish = config.gibberish;
                params.prompt_variant = config.prompt_variant;
                let seed = root
                    .child(grid.task.name())
                    .child(&tuple)
                    .child(sample.to_string());
                let id = format!("{}/{}/{}", grid.task.name(), tuple, sample);
                let case = tasks::generate_case(grid.task, id, params, &vocab, seed).map_err(
                    |source| ExpandError::Generation {
                        task: grid.task,
                        tuple: tuple.clone(),
                        sample,
                        source,
                    },
                )?;
                cases.push(case);
            }
        }
    }
    Ok(cases)
}

/// Wire form of one snapshot line.
#[derive(Debug, Serialize, Deserialize)]
struct SnapshotLine {
    schema_version: u32,
    id: String,
    category: Category,
    task: Task,
    params: GenParams,
    context: String,
    instruction: String,
    reference: Answer,
    metric: MetricKind,
    seed_path: Seed,
}

impl From<&TestCase> for SnapshotLine {
    fn from(case: &TestCase) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            id: case.id.clone(),
            category: case.task.category(),
            task: case.task,
            params: case.params.clone(),
            context: case.context_text.clone(),
            instruction: case.instruction_text.clone(),
            reference: case.reference.clone(),
            metric: case.metric,
            seed_path: case.seed.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SnapshotIoError {
    #[error("refusing to write an empty snapshot")]
    EmptySnapshot,
    #[error("line {line}: malformed snapshot line: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaVersionMismatch { line: usize, found: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serialize cases as JSONL, one case per line, `\n` endings.
pub fn write_snapshot(cases: &[TestCase], path: &Path) -> Result<(), SnapshotIoError> {
    if cases.is_empty() {
        return Err(SnapshotIoError::EmptySnapshot);
    }
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for case in cases {
        let line = SnapshotLine::from(case);
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a JSONL snapshot back, validating schema version and the
/// task/category/metric mappings line by line.
pub fn read_snapshot(path: &Path) -> Result<Vec<TestCase>, SnapshotIoError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut cases = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        let parsed: SnapshotLine =
            serde_json::from_str(&text).map_err(|e| SnapshotIoError::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        if parsed.schema_version != SCHEMA_VERSION {
            return Err(SnapshotIoError::SchemaVersionMismatch {
                line: line_no,
                found: parsed.schema_version,
            });
        }
        if parsed.category != parsed.task.category() || parsed.metric != parsed.task.metric() {
            return Err(SnapshotIoError::MalformedLine {
                line: line_no,
                message: format!("category/metric do not match task {}", parsed.task.name()),
            });
        }
        cases.push(TestCase {
            id: parsed.id,
            task: parsed.task,
            params: parsed.params,
            context_text: parsed.context,
            instruction_text: parsed.instruction,
            reference: parsed.reference,
            metric: parsed.metric,
            seed: parsed.seed_path,
        });
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_name_round_trip() {
        for task in Task::ALL {
            assert_eq!(Task::parse(task.name()), Some(task));
        }
        assert_eq!(Task::parse("not_a_task"), None);
    }

    #[test]
    fn default_grid_counts_match_published_table() {
        let config = default_config();
        let count = |task: Task| {
            config
                .grids
                .iter()
                .find(|g| g.task == task)
                .map(|g| g.settings.len() * g.samples)
                .unwrap()
        };
        assert_eq!(count(Task::StringSearchWord), 50);
        assert_eq!(count(Task::StringSearchSeq), 80);
        assert_eq!(count(Task::KeyValueSearch), 50);
        assert_eq!(count(Task::BatchSearch), 20);
        assert_eq!(count(Task::SnapshotWords), 10);
        assert_eq!(count(Task::ReplaceAll), 40);
        assert_eq!(count(Task::OverwritePositions), 30);
        assert_eq!(count(Task::SnapshotNumbers), 10);
        assert_eq!(count(Task::FunctionalUpdates), 15);
        assert_eq!(count(Task::ComparePositions), 75);
        assert_eq!(count(Task::FindDuplicates), 25);
        assert_eq!(count(Task::Count), 25);
        assert_eq!(count(Task::CheckAssociation), 50);
        assert_eq!(count(Task::CompareTwoLists), 80);
        assert_eq!(count(Task::IdentifyOddGroup), 60);
        assert_eq!(count(Task::PatchDifference), 120);
        assert_eq!(count(Task::GroupMembership), 100);
        assert_eq!(count(Task::GroupAssociation), 40);
        assert_eq!(count(Task::GroupAssociationAlternating), 50);
        assert_eq!(count(Task::Iterate), 20);
        assert_eq!(count(Task::QuantityState), 10);
        assert_eq!(count(Task::SetState), 40);
        assert_eq!(count(Task::DataBlocks), 50);
        assert_eq!(count(Task::TheoryOfMind), 60);
        assert_eq!(config.total_cases(), 1110);
    }

    #[test]
    fn extraneous_params_are_rejected() {
        let mut config = SnapshotConfig::build(&SnapshotOptions {
            task: Some(Task::SnapshotWords),
            ..Default::default()
        });
        config.grids[0].settings[0].repetition = Some(3);
        let err = expand_snapshot(&config).unwrap_err();
        assert!(matches!(err, ExpandError::ExtraneousParam { .. }));
    }

    #[test]
    fn answer_canonical_text_forms() {
        assert_eq!(Answer::Binary(true).canonical_text(), "yes");
        assert_eq!(Answer::Integer(-3).canonical_text(), "-3");
        assert_eq!(
            Answer::OrderedList(vec!["b".into(), "a".into()]).canonical_text(),
            "b, a"
        );
        let set: BTreeSet<String> = ["pear", "lime"].iter().map(|s| s.to_string()).collect();
        assert_eq!(Answer::WordSet(set).canonical_text(), "lime, pear");
        let mut agents = BTreeMap::new();
        agents.insert("Alice".to_string(), BTreeSet::from(["apple".to_string()]));
        agents.insert("Bob".to_string(), BTreeSet::new());
        assert_eq!(
            Answer::AgentSets(agents).canonical_text(),
            "Alice: apple; Bob:"
        );
    }

    #[test]
    fn grid_tuple_formats() {
        let mut p = GenParams::new();
        p.query_depth = Some(0.25);
        p.label = Some(Label::Negative);
        assert_eq!(
            grid_tuple(Task::StringSearchWord, &p),
            "depth=0.25,label=negative"
        );
        assert_eq!(grid_tuple(Task::SnapshotWords, &GenParams::new()), "-");
    }
}
