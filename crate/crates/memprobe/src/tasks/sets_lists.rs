//! Sets-and-lists family: membership lookup, same-set association (plain and
//! alternating), and per-list element iteration.

use rand::Rng;

use crate::corpus::{Seed, Vocabulary};
use crate::snapshot::{Answer, GenParams, Label};

use super::{
    depth_index, even_split, fit_units, quoted, render_labeled, require, require_budget,
    word_capacity, CaseParts, GenError,
};

pub(crate) struct Grouped {
    pub labels: Vec<String>,
    pub groups: Vec<Vec<String>>,
    pub turns: usize,
}

impl Grouped {
    /// Members in context order (groups are laid out sequentially).
    fn flattened(&self) -> Vec<&String> {
        self.groups.iter().flatten().collect()
    }

    pub fn render(&self) -> String {
        if self.turns <= 1 {
            let segments: Vec<(&String, &[String])> = self
                .labels
                .iter()
                .zip(&self.groups)
                .map(|(l, g)| (l, g.as_slice()))
                .collect();
            return render_labeled(&segments);
        }
        // Turn-major interleaving: each label contributes one segment per
        // turn; concatenating a label's segments recovers its full list.
        let mut segments: Vec<(&String, &[String])> = Vec::new();
        let chunked: Vec<Vec<&[String]>> = self
            .groups
            .iter()
            .map(|group| {
                let sizes = even_split(group.len(), self.turns);
                let mut chunks = Vec::with_capacity(self.turns);
                let mut offset = 0;
                for size in sizes {
                    chunks.push(&group[offset..offset + size]);
                    offset += size;
                }
                chunks
            })
            .collect();
        for turn in 0..self.turns {
            for (label, chunks) in self.labels.iter().zip(&chunked) {
                if !chunks[turn].is_empty() {
                    segments.push((label, chunks[turn]));
                }
            }
        }
        render_labeled(&segments)
    }
}

/// Build `k` labeled groups of globally unique words, fitting the total
/// member count to the budget. `turns` > 1 interleaves the rendering; it
/// degrades to the member count per label when the budget is too small for
/// one member per segment.
pub(crate) fn build_groups(
    label_prefix: &str,
    k: usize,
    min_per_group: usize,
    turns: usize,
    params: &GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<Grouped, GenError> {
    let budget = require_budget(params)?;
    let labels: Vec<String> = (1..=k).map(|i| format!("{label_prefix}{i}")).collect();
    let mut sampler = vocab.sampler(seed.child("members").rng());
    let mut pool: Vec<String> = Vec::new();

    let assemble = |pool: &[String], n: usize| {
        let sizes = even_split(n, k);
        let mut groups = Vec::with_capacity(k);
        let mut offset = 0;
        for size in sizes {
            groups.push(pool[offset..offset + size].to_vec());
            offset += size;
        }
        Grouped {
            labels: labels.clone(),
            groups,
            turns: turns.min(n / k).max(1),
        }
    };

    let total = fit_units(&budget, k * min_per_group, word_capacity(vocab), |n| {
        if pool.len() < n {
            let need = n - pool.len();
            pool.extend(sampler.take(need)?);
        }
        Ok(budget.estimate(&assemble(&pool, n).render()))
    })?;
    Ok(assemble(&pool, total))
}

pub fn group_membership(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let k = require(params.num_groups, "num_groups")?;
    let depth = require(params.query_depth, "query_depth")?;
    let grouped = build_groups("S", k, 1, 1, params, vocab, seed)?;

    let flattened = grouped.flattened();
    let query = flattened[depth_index(depth, flattened.len())].clone();
    let owner = grouped
        .groups
        .iter()
        .position(|g| g.contains(&query))
        .expect("query drawn from a group");

    Ok(CaseParts {
        context: grouped.render(),
        instruction: format!(
            "Each set in the context is labeled. Which set includes the word {}? Answer \
             with the set label only.",
            quoted(&query)
        ),
        reference: Answer::Text(grouped.labels[owner].clone()),
    })
}

pub fn group_association(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
    alternating: bool,
) -> Result<CaseParts, GenError> {
    let k = require(params.num_groups, "num_groups")?;
    let label = require(params.label, "label")?;
    let turns = if alternating {
        require(params.num_turns, "num_turns")?
    } else {
        1
    };
    let grouped = build_groups("S", k, 2, turns, params, vocab, seed)?;
    if alternating {
        params.num_turns = Some(grouped.turns);
    }

    let mut pick_rng = seed.child("pick").rng();
    let (x, y) = match label {
        Label::Positive => {
            let g = pick_rng.gen_range(0..k);
            let members = &grouped.groups[g];
            let picks = rand::seq::index::sample(&mut pick_rng, members.len(), 2);
            (
                members[picks.index(0)].clone(),
                members[picks.index(1)].clone(),
            )
        }
        Label::Negative => {
            let picks = rand::seq::index::sample(&mut pick_rng, k, 2);
            let (a, b) = (
                &grouped.groups[picks.index(0)],
                &grouped.groups[picks.index(1)],
            );
            (
                a[pick_rng.gen_range(0..a.len())].clone(),
                b[pick_rng.gen_range(0..b.len())].clone(),
            )
        }
    };

    let instruction = match params.prompt_variant {
        2 => format!(
            "Check if the words {} and {} belong to the same set. Answer with yes or no.",
            quoted(&x),
            quoted(&y)
        ),
        _ => format!(
            "Determine if the word {} and the word {} are in the same set. Answer with \
             yes or no.",
            quoted(&x),
            quoted(&y)
        ),
    };

    Ok(CaseParts {
        context: grouped.render(),
        instruction,
        reference: Answer::Binary(label == Label::Positive),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Last,
    First,
}

pub fn iterate(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
    which: Which,
) -> Result<CaseParts, GenError> {
    let k = require(params.num_groups, "num_groups")?;
    let grouped = build_groups("L", k, 1, 1, params, vocab, seed)?;

    let reference: Vec<String> = grouped
        .groups
        .iter()
        .map(|g| match which {
            Which::Last => g.last().expect("nonempty group").clone(),
            Which::First => g.first().expect("nonempty group").clone(),
        })
        .collect();

    let position = match which {
        Which::Last => "last",
        Which::First => "first",
    };
    Ok(CaseParts {
        context: grouped.render(),
        instruction: format!(
            "The context contains labeled lists. Return the {position} element of each \
             list, in the order the lists are labeled, separated by commas."
        ),
        reference: Answer::OrderedList(reference),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenBudget;
    use std::collections::HashSet;

    fn base_params(budget: usize) -> GenParams {
        let mut p = GenParams::new();
        p.token_budget = Some(TokenBudget::new(budget));
        p
    }

    fn vocab() -> Vocabulary {
        Vocabulary::builtin()
    }

    fn parse_segments(context: &str) -> Vec<(String, Vec<String>)> {
        context
            .split("; ")
            .map(|seg| {
                let (label, members) = seg.split_once(": ").unwrap();
                (
                    label.to_string(),
                    members.split(", ").map(str::to_string).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn membership_words_are_globally_unique() {
        let mut p = base_params(500);
        p.num_groups = Some(8);
        p.query_depth = Some(0.5);
        let parts = group_membership(&mut p, &vocab(), &Seed::new(1)).unwrap();
        let mut seen = HashSet::new();
        for (_, members) in parse_segments(&parts.context) {
            for m in members {
                assert!(seen.insert(m), "duplicate member across groups");
            }
        }
    }

    #[test]
    fn membership_depth_zero_is_first_member_of_first_group() {
        let mut p = base_params(500);
        p.num_groups = Some(4);
        p.query_depth = Some(0.0);
        let parts = group_membership(&mut p, &vocab(), &Seed::new(2)).unwrap();
        let segments = parse_segments(&parts.context);
        let query = parts.instruction.split('"').nth(1).unwrap();
        assert_eq!(segments[0].1[0], query);
        assert_eq!(parts.reference, Answer::Text("S1".to_string()));
    }

    #[test]
    fn association_labels_hold() {
        for (label, seed) in [(Label::Positive, 3), (Label::Negative, 4)] {
            let mut p = base_params(500);
            p.num_groups = Some(4);
            p.label = Some(label);
            let parts = group_association(&mut p, &vocab(), &Seed::new(seed), false).unwrap();
            let mut quotes = parts.instruction.split('"');
            let x = quotes.nth(1).unwrap();
            let y = quotes.nth(1).unwrap();
            let segments = parse_segments(&parts.context);
            let find = |w: &str| {
                segments
                    .iter()
                    .position(|(_, members)| members.iter().any(|m| m == w))
                    .unwrap()
            };
            assert_eq!(find(x) == find(y), label == Label::Positive);
        }
    }

    #[test]
    fn alternating_segments_reconstruct_lists() {
        let mut p = base_params(1000);
        p.num_groups = Some(4);
        p.num_turns = Some(10);
        p.label = Some(Label::Positive);
        let parts = group_association(&mut p, &vocab(), &Seed::new(5), true).unwrap();
        let segments = parse_segments(&parts.context);
        // Each label appears exactly `turns` times.
        let turns = p.num_turns.unwrap();
        assert!(turns > 1);
        for label in ["S1", "S2", "S3", "S4"] {
            let n = segments.iter().filter(|(l, _)| l == label).count();
            assert_eq!(n, turns);
        }
        // Members stay globally unique across all segments.
        let mut seen = HashSet::new();
        for (_, members) in &segments {
            for m in members {
                assert!(seen.insert(m.clone()));
            }
        }
    }

    #[test]
    fn iterate_last_and_first() {
        let mut p = base_params(400);
        p.num_groups = Some(4);
        let last = iterate(&mut p, &vocab(), &Seed::new(6), Which::Last).unwrap();
        let segments = parse_segments(&last.context);
        let expect_last: Vec<String> = segments
            .iter()
            .map(|(_, m)| m.last().unwrap().clone())
            .collect();
        assert_eq!(last.reference, Answer::OrderedList(expect_last));
        assert!(last.instruction.contains("last element"));

        let mut p = base_params(400);
        p.num_groups = Some(4);
        let first = iterate(&mut p, &vocab(), &Seed::new(6), Which::First).unwrap();
        let segments = parse_segments(&first.context);
        let expect_first: Vec<String> = segments
            .iter()
            .map(|(_, m)| m.first().unwrap().clone())
            .collect();
        assert_eq!(first.reference, Answer::OrderedList(expect_first));
        assert!(first.instruction.contains("first element"));
    }
}
