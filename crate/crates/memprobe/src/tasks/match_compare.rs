//! Match and compare family: relative position checks, duplicate spotting,
//! occurrence counting, and shared-tag association checks.

use std::collections::{HashMap, HashSet};

use rand::Rng;

use crate::corpus::{Seed, Vocabulary};
use crate::snapshot::{Answer, GenParams, Label};

use super::{
    depth_index, fit_units, quoted, require, require_budget, word_capacity, CaseParts, GenError,
};

pub fn compare_positions(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let budget = require_budget(params)?;
    let d1 = require(params.query_depth, "query_depth")?;
    let d2 = require(params.query_depth_2, "query_depth_2")?;

    let mut sampler = vocab.sampler(seed.child("words").rng());
    let mut pool: Vec<String> = Vec::new();
    let n = fit_units(&budget, 3, word_capacity(vocab), |n| {
        if pool.len() < n {
            let need = n - pool.len();
            pool.extend(sampler.take(need)?);
        }
        Ok(budget.estimate(&pool[..n].join(" ")))
    })?;
    let words = &pool[..n];

    let mut first = depth_index(d1, n);
    let mut second = depth_index(d2, n);
    if first == second {
        // Equal depths collide; the second query shifts one slot later,
        // except at the very end where the first shifts earlier instead.
        if second + 1 < n {
            second += 1;
        } else {
            first -= 1;
        }
        params.collision_shifted = Some(true);
    }
    let x = words[first].clone();
    let y = words[second].clone();

    let instruction = format!(
        "Does the word {} appear before the word {} in the context? Answer with yes or no.",
        quoted(&x),
        quoted(&y)
    );

    Ok(CaseParts {
        context: words.join(" "),
        instruction,
        reference: Answer::Binary(first < second),
    })
}

fn embedded_repeats(
    params: &GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<(String, String, usize), GenError> {
    let budget = require_budget(params)?;
    let repetition = require(params.repetition, "repetition")?;

    let mut sampler = vocab.sampler(seed.child("words").rng());
    let mut pool: Vec<String> = Vec::new();
    let n = fit_units(&budget, repetition + 1, word_capacity(vocab), |n| {
        if pool.len() < n {
            let need = n - pool.len();
            pool.extend(sampler.take(need)?);
        }
        Ok(budget.estimate(&pool[..n].join(" ")))
    })?;
    let target = sampler.take_one()?;

    let mut place_rng = seed.child("place").rng();
    let positions: HashSet<usize> = rand::seq::index::sample(&mut place_rng, n, repetition)
        .into_iter()
        .collect();
    let mut fillers = pool[..n - repetition].iter();
    let context_words: Vec<&str> = (0..n)
        .map(|i| {
            if positions.contains(&i) {
                target.as_str()
            } else {
                fillers.next().expect("enough fillers").as_str()
            }
        })
        .collect();

    Ok((context_words.join(" "), target, repetition))
}

pub fn find_duplicates(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let (context, target, _) = embedded_repeats(params, vocab, seed)?;
    Ok(CaseParts {
        context,
        instruction: "Exactly one word in the context appears more than once. Which word is it? \
                      Answer with the word only."
            .to_string(),
        reference: Answer::Text(target),
    })
}

pub fn count(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let (context, target, repetition) = embedded_repeats(params, vocab, seed)?;
    Ok(CaseParts {
        context,
        instruction: format!(
            "How many times is the word {} repeated in the context? Answer with the number only.",
            quoted(&target)
        ),
        reference: Answer::Integer(repetition as i64),
    })
}

pub fn check_association(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let budget = require_budget(params)?;
    let n_attributes = require(params.n_attributes, "n_attributes")?;
    let label = require(params.label, "label")?;

    let mut sampler = vocab.sampler(seed.child("words").rng());
    let mut tag_rng = seed.child("tags").rng();
    let mut words: Vec<String> = Vec::new();
    let mut tags: Vec<usize> = Vec::new();
    let render = |words: &[String], tags: &[usize]| {
        words
            .iter()
            .zip(tags)
            .map(|(w, t)| format!("{w}: ATT_{t}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let n = fit_units(&budget, 2, word_capacity(vocab), |n| {
        while words.len() < n {
            words.push(sampler.take_one()?);
            tags.push(tag_rng.gen_range(1..=n_attributes));
        }
        Ok(budget.estimate(&render(&words[..n], &tags[..n])))
    })?;
    words.truncate(n);
    tags.truncate(n);

    let mut by_tag: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &t) in tags.iter().enumerate() {
        by_tag.entry(t).or_default().push(i);
    }

    let mut pick_rng = seed.child("pick").rng();
    let (a, b) = match label {
        Label::Positive => {
            let mut shared: Vec<usize> = by_tag
                .iter()
                .filter(|(_, v)| v.len() >= 2)
                .map(|(&t, _)| t)
                .collect();
            shared.sort_unstable();
            if shared.is_empty() {
                // Degenerate tagging: rebalance instead of erroring.
                tags[1] = tags[0];
                by_tag.clear();
                for (i, &t) in tags.iter().enumerate() {
                    by_tag.entry(t).or_default().push(i);
                }
                shared.push(tags[0]);
            }
            let tag = shared[pick_rng.gen_range(0..shared.len())];
            let members = &by_tag[&tag];
            let picks = rand::seq::index::sample(&mut pick_rng, members.len(), 2);
            (members[picks.index(0)], members[picks.index(1)])
        }
        Label::Negative => {
            if by_tag.len() < 2 {
                tags[1] = if tags[0] == 1 { 2 } else { 1 };
            }
            let a = pick_rng.gen_range(0..n);
            let others: Vec<usize> = (0..n).filter(|&i| tags[i] != tags[a]).collect();
            let b = others[pick_rng.gen_range(0..others.len())];
            (a, b)
        }
    };

    let instruction = match params.prompt_variant {
        2 => format!(
            "Given the context of word and attribute pairs, check if the words {} and {} \
             share the same attribute. Answer with yes or no.",
            quoted(&words[a]),
            quoted(&words[b])
        ),
        _ => format!(
            "Given the context with words and their assigned attributes in the format of \
             word: ATT_N, determine if the word {} has the same attribute as the word {}. \
             Answer with yes or no.",
            quoted(&words[a]),
            quoted(&words[b])
        ),
    };

    Ok(CaseParts {
        context: render(&words, &tags),
        instruction,
        reference: Answer::Binary(label == Label::Positive),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenBudget;

    fn base_params(budget: usize) -> GenParams {
        let mut p = GenParams::new();
        p.token_budget = Some(TokenBudget::new(budget));
        p
    }

    fn vocab() -> Vocabulary {
        Vocabulary::builtin()
    }

    #[test]
    fn compare_positions_forced_orderings() {
        for (d1, d2, expect) in [(0.25, 0.75, true), (0.75, 0.25, false)] {
            let mut p = base_params(200);
            p.query_depth = Some(d1);
            p.query_depth_2 = Some(d2);
            let parts = compare_positions(&mut p, &vocab(), &Seed::new(1)).unwrap();
            assert_eq!(parts.reference, Answer::Binary(expect));
            let words: Vec<&str> = parts.context.split_whitespace().collect();
            let mut quotes = parts.instruction.split('"');
            let x = quotes.nth(1).unwrap();
            let y = quotes.nth(1).unwrap();
            let ix = words.iter().position(|w| *w == x).unwrap();
            let iy = words.iter().position(|w| *w == y).unwrap();
            assert_eq!(ix < iy, expect);
        }
    }

    #[test]
    fn compare_positions_equal_depths_shift_later() {
        let mut p = base_params(200);
        p.query_depth = Some(0.5);
        p.query_depth_2 = Some(0.5);
        let parts = compare_positions(&mut p, &vocab(), &Seed::new(2)).unwrap();
        assert_eq!(parts.reference, Answer::Binary(true));
        assert_eq!(p.collision_shifted, Some(true));
    }

    #[test]
    fn compare_positions_equal_depths_at_end() {
        let mut p = base_params(200);
        p.query_depth = Some(1.0);
        p.query_depth_2 = Some(1.0);
        let parts = compare_positions(&mut p, &vocab(), &Seed::new(3)).unwrap();
        assert_eq!(parts.reference, Answer::Binary(true));
    }

    #[test]
    fn duplicates_histogram_isolates_target() {
        let mut p = base_params(300);
        p.repetition = Some(4);
        let parts = find_duplicates(&mut p, &vocab(), &Seed::new(4)).unwrap();
        let Answer::Text(target) = &parts.reference else {
            panic!()
        };
        let mut histogram: HashMap<&str, usize> = HashMap::new();
        for w in parts.context.split_whitespace() {
            *histogram.entry(w).or_default() += 1;
        }
        assert_eq!(histogram[target.as_str()], 4);
        let repeated: Vec<&&str> = histogram
            .iter()
            .filter(|(_, &c)| c > 1)
            .map(|(w, _)| w)
            .collect();
        assert_eq!(repeated.len(), 1);
    }

    #[test]
    fn count_reference_matches_scan() {
        let mut p = base_params(4000);
        p.repetition = Some(32);
        let parts = count(&mut p, &vocab(), &Seed::new(5)).unwrap();
        let target = parts.instruction.split('"').nth(1).unwrap();
        let scanned = parts
            .context
            .split_whitespace()
            .filter(|w| *w == target)
            .count();
        assert_eq!(parts.reference, Answer::Integer(32));
        assert_eq!(scanned, 32);
    }

    #[test]
    fn association_tags_match_label() {
        for (label, expect, seed) in [(Label::Positive, true, 6), (Label::Negative, false, 7)] {
            let mut p = base_params(300);
            p.n_attributes = Some(4);
            p.label = Some(label);
            let parts = check_association(&mut p, &vocab(), &Seed::new(seed)).unwrap();
            assert_eq!(parts.reference, Answer::Binary(expect));
            let mut quotes = parts.instruction.split('"');
            let a = quotes.nth(1).unwrap();
            let b = quotes.nth(1).unwrap();
            let tag_of = |word: &str| {
                parts
                    .context
                    .split(", ")
                    .find_map(|entry| {
                        let (w, t) = entry.split_once(": ")?;
                        (w == word).then(|| t.to_string())
                    })
                    .unwrap()
            };
            assert_eq!(tag_of(a) == tag_of(b), expect);
        }
    }
}
