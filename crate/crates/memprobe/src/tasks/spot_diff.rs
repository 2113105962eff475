//! Spot-the-differences family: list difference, odd-group-out, and
//! repeated-pattern continuation.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{Seed, Vocabulary};
use crate::snapshot::{Answer, ChosenList, GenParams};

use super::{
    fit_units, ordinal, render_labeled, require, require_budget, word_capacity, CaseParts, GenError,
};

pub fn compare_two_lists(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let budget = require_budget(params)?;
    let num_diff = require(params.num_diff_words, "num_diff_words")?;
    let chosen = require(params.chosen_list, "chosen_list")?;

    let mut sampler = vocab.sampler(seed.child("words").rng());
    let mut pool: Vec<String> = Vec::new();
    let len = fit_units(&budget, num_diff.max(1), word_capacity(vocab) / 2, |n| {
        if pool.len() < n {
            let need = n - pool.len();
            pool.extend(sampler.take(need)?);
        }
        let first = &pool[..n];
        Ok(budget.estimate(&render_labeled(&[("X", first), ("Y", first)])))
    })?;

    let first: Vec<String> = pool[..len].to_vec();
    let replacements = sampler.take(num_diff)?;
    let mut place_rng = seed.child("place").rng();
    let mut positions: Vec<usize> =
        rand::seq::index::sample(&mut place_rng, len, num_diff).into_vec();
    positions.sort_unstable();

    let mut second = first.clone();
    for (slot, replacement) in positions.iter().zip(&replacements) {
        second[*slot] = replacement.clone();
    }

    let reference: Vec<String> = match chosen {
        ChosenList::First => positions.iter().map(|&i| first[i].clone()).collect(),
        ChosenList::Second => positions.iter().map(|&i| second[i].clone()).collect(),
    };
    let (from, other) = match chosen {
        ChosenList::First => ("X", "Y"),
        ChosenList::Second => ("Y", "X"),
    };

    let instruction = format!(
        "The context contains two labeled lists of the same length. Report the words that \
         are in list {from} but not in list {other}, in order, separated by commas."
    );

    Ok(CaseParts {
        context: render_labeled(&[("X", first.as_slice()), ("Y", second.as_slice())]),
        instruction,
        reference: Answer::OrderedList(reference),
    })
}

pub fn identify_odd_group(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let budget = require_budget(params)?;
    let group_size = require(params.words_per_group, "words_per_group")?;
    let pct = require(params.pct_difference, "pct_difference")?;

    let mut sampler = vocab.sampler(seed.child("base").rng());
    let base = sampler.take(group_size)?;

    // Every group is an independent shuffle of the same base multiset; the
    // shuffle for group i is a pure function of the seed and i, so the fit
    // probes below see stable content.
    let mut groups: Vec<Vec<String>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let extend_groups = |groups: &mut Vec<Vec<String>>, labels: &mut Vec<String>, n: usize| {
        while groups.len() < n {
            let i = groups.len();
            let mut group = base.clone();
            group.shuffle(&mut seed.child(format!("shuffle{i}")).rng());
            groups.push(group);
            labels.push(format!("G{}", i + 1));
        }
    };

    // Identifying the odd group by majority vote needs at least three groups.
    let count = fit_units(&budget, 3, usize::MAX, |n| {
        extend_groups(&mut groups, &mut labels, n);
        let segments: Vec<(&String, &[String])> = labels[..n]
            .iter()
            .zip(&groups[..n])
            .map(|(l, g)| (l, g.as_slice()))
            .collect();
        Ok(budget.estimate(&render_labeled(&segments)))
    })?;
    groups.truncate(count);
    labels.truncate(count);

    let replaced = (pct * group_size as f64).round() as usize;
    let odd = seed.child("odd").rng().gen_range(0..count);
    if replaced > 0 {
        let fresh = sampler.take(replaced)?;
        let mut replace_rng = seed.child("replace").rng();
        let slots = rand::seq::index::sample(&mut replace_rng, group_size, replaced);
        for (slot, word) in slots.iter().zip(fresh) {
            groups[odd][slot] = word;
        }
    }

    let segments: Vec<(&String, &[String])> = labels
        .iter()
        .zip(&groups)
        .map(|(l, g)| (l, g.as_slice()))
        .collect();
    let reference = if replaced == 0 {
        "none".to_string()
    } else {
        labels[odd].clone()
    };

    Ok(CaseParts {
        context: render_labeled(&segments),
        instruction: "The context contains labeled groups of words that should all contain \
                      the same words. Identify the label of the one group that is different, \
                      or answer \"none\" if every group has the same words. Answer with the \
                      label or \"none\" only."
            .to_string(),
        reference: Answer::Text(reference),
    })
}

pub fn patch_difference(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let budget = require_budget(params)?;
    let pattern_len = require(params.pattern_length, "pattern_length")?;
    let cutoff_depth = require(params.cutoff_depth, "cutoff_depth")?;
    let nth = require(params.nth, "nth")?;

    let mut sampler = vocab.sampler(seed.child("pattern").rng());
    let pattern = sampler.take(pattern_len)?;
    let cutoff_len = (cutoff_depth * (pattern_len - 1) as f64).round() as usize;

    let render = |repeats: usize| {
        let mut words: Vec<&str> = Vec::with_capacity(repeats * pattern_len + cutoff_len);
        for _ in 0..repeats {
            words.extend(pattern.iter().map(String::as_str));
        }
        words.extend(pattern[..cutoff_len].iter().map(String::as_str));
        words.join(" ")
    };
    let repeats = fit_units(&budget, 2, usize::MAX, |n| Ok(budget.estimate(&render(n))))?;

    let answer = pattern[(cutoff_len + nth - 1) % pattern_len].clone();
    let instruction = format!(
        "The context repeats a sequence of words and stops partway through. What is the {} \
         next element that continues the sequence? Answer with the word only.",
        ordinal(nth)
    );

    Ok(CaseParts {
        context: render(repeats),
        instruction,
        reference: Answer::Text(answer),
    })
}
