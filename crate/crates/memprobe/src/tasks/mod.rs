//! Test-case generators, one module per capability family, plus the
//! budget-fitting and rendering helpers they share.

pub mod composite;
pub mod match_compare;
pub mod recall_edit;
pub mod search;
pub mod sets_lists;
pub mod spot_diff;
pub mod stateful;

use thiserror::Error;

use crate::corpus::{CorpusError, Seed, TokenBudget, Vocabulary};
use crate::snapshot::{Answer, GenParams, Task, TestCase};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("missing parameter `{0}`")]
    MissingParam(&'static str),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("budget too small: minimum structure estimates {estimate} tokens, ceiling {ceiling}")]
    BudgetTooSmall { estimate: usize, ceiling: usize },
    #[error("{0}")]
    Invalid(String),
}

/// The generated payload of a case; id/task/metric are attached by expansion.
#[derive(Debug, Clone)]
pub struct CaseParts {
    pub context: String,
    pub instruction: String,
    pub reference: Answer,
}

/// Generate one concrete case. `params` is stored on the case afterwards, so
/// generators may record realized values into it.
pub fn generate_case(
    task: Task,
    id: String,
    mut params: GenParams,
    vocab: &Vocabulary,
    seed: Seed,
) -> Result<TestCase, GenError> {
    let parts = match task {
        Task::StringSearchWord => search::string_search_word(&mut params, vocab, &seed)?,
        Task::StringSearchSeq => search::string_search_seq(&mut params, vocab, &seed)?,
        Task::KeyValueSearch => search::key_value_search(&mut params, vocab, &seed)?,
        Task::BatchSearch => search::batch_search(&mut params, vocab, &seed)?,
        Task::SnapshotWords => recall_edit::snapshot(&mut params, vocab, &seed, false)?,
        Task::SnapshotNumbers => recall_edit::snapshot(&mut params, vocab, &seed, true)?,
        Task::ReplaceAll => recall_edit::replace_all(&mut params, vocab, &seed)?,
        Task::OverwritePositions => recall_edit::overwrite_positions(&mut params, vocab, &seed)?,
        Task::FunctionalUpdates => recall_edit::functional_updates(&mut params, &seed)?,
        Task::ComparePositions => match_compare::compare_positions(&mut params, vocab, &seed)?,
        Task::FindDuplicates => match_compare::find_duplicates(&mut params, vocab, &seed)?,
        Task::Count => match_compare::count(&mut params, vocab, &seed)?,
        Task::CheckAssociation => match_compare::check_association(&mut params, vocab, &seed)?,
        Task::CompareTwoLists => spot_diff::compare_two_lists(&mut params, vocab, &seed)?,
        Task::IdentifyOddGroup => spot_diff::identify_odd_group(&mut params, vocab, &seed)?,
        Task::PatchDifference => spot_diff::patch_difference(&mut params, vocab, &seed)?,
        Task::GroupMembership => sets_lists::group_membership(&mut params, vocab, &seed)?,
        Task::GroupAssociation => sets_lists::group_association(&mut params, vocab, &seed, false)?,
        Task::GroupAssociationAlternating => {
            sets_lists::group_association(&mut params, vocab, &seed, true)?
        }
        Task::Iterate => sets_lists::iterate(&mut params, vocab, &seed, sets_lists::Which::Last)?,
        Task::QuantityState => stateful::quantity_state(&mut params, &seed)?,
        Task::SetState => stateful::set_state(&mut params, vocab, &seed)?,
        Task::DataBlocks => composite::data_blocks(&mut params, vocab, &seed)?,
        Task::TheoryOfMind => composite::theory_of_mind(&mut params, vocab, &seed)?,
    };
    Ok(TestCase {
        id,
        task,
        metric: task.metric(),
        context_text: parts.context,
        instruction_text: parts.instruction,
        reference: parts.reference,
        params,
        seed,
    })
}

/// Pick a unit count whose rendered estimate lands in the budget band.
///
/// `estimate_for(n)` must extend whatever backing store it samples from to at
/// least `n` units, render the first `n`, and return the estimate; estimates
/// must be monotone in `n` and `n` never exceeds `max_units`. When the band
/// is unreachable because units are coarse, the count with the estimate
/// closest to the target is returned.
pub(crate) fn fit_units(
    budget: &TokenBudget,
    min_units: usize,
    max_units: usize,
    mut estimate_for: impl FnMut(usize) -> Result<usize, GenError>,
) -> Result<usize, GenError> {
    let (low, high, target) = (budget.low(), budget.high(), budget.target_tokens);
    let min_units = min_units.max(1);
    let min_est = estimate_for(min_units)?;
    if min_est > high {
        return Err(GenError::BudgetTooSmall {
            estimate: min_est,
            ceiling: high,
        });
    }
    if min_est >= low {
        return Ok(min_units);
    }
    if max_units <= min_units {
        return Ok(min_units);
    }
    let mut lo = min_units;
    let mut hi = min_units;
    loop {
        hi = (hi * 2).max(lo + 1).min(max_units);
        let est = estimate_for(hi)?;
        if est >= low {
            break;
        }
        if hi == max_units {
            // The unit source is exhausted below the band; undershoot is the
            // closest achievable context.
            return Ok(hi);
        }
        lo = hi;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if estimate_for(mid)? >= low {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let est_hi = estimate_for(hi)?;
    if est_hi <= high || hi == min_units {
        return Ok(hi);
    }
    let est_lo = estimate_for(hi - 1)?;
    if target.saturating_sub(est_lo) <= est_hi.saturating_sub(target) {
        Ok(hi - 1)
    } else {
        Ok(hi)
    }
}

pub(crate) fn require<T: Copy>(value: Option<T>, name: &'static str) -> Result<T, GenError> {
    value.ok_or(GenError::MissingParam(name))
}

/// How many words a generator may draw for context filler, leaving headroom
/// for queries, replacements, and other per-case extras.
pub(crate) fn word_capacity(vocab: &Vocabulary) -> usize {
    vocab.capacity_hint().saturating_sub(64)
}

pub(crate) fn require_budget(params: &GenParams) -> Result<TokenBudget, GenError> {
    require(params.token_budget, "token_budget")
}

pub(crate) fn quoted(word: &str) -> String {
    format!("\"{word}\"")
}

pub(crate) fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (1, 11) | (2, 12) | (3, 13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// Placement index for a fractional depth over `n` slots: `floor(d * (n-1))`.
pub(crate) fn depth_index(depth: f64, n: usize) -> usize {
    debug_assert!(n >= 1);
    (depth * (n - 1) as f64).floor() as usize
}

/// Render `label: member, member` segments joined by `; `.
pub(crate) fn render_labeled<S: AsRef<str>>(segments: &[(S, &[String])]) -> String {
    segments
        .iter()
        .map(|(label, members)| format!("{}: {}", label.as_ref(), members.join(", ")))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Split `total` into `parts` chunk lengths, remainder distributed to the
/// earlier chunks.
pub(crate) fn even_split(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let remainder = total % parts;
    (0..parts)
        .map(|i| base + usize::from(i < remainder))
        .collect()
}
