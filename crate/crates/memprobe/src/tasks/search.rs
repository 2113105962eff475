//! Search family: word and subsequence presence probes, key-value lookup,
//! and batched key-value lookup.

use rand::Rng;

use crate::corpus::{Seed, Vocabulary};
use crate::snapshot::{Answer, GenParams, Label};

use super::{
    depth_index, fit_units, quoted, require, require_budget, word_capacity, CaseParts, GenError,
};

pub fn string_search_word(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let budget = require_budget(params)?;
    let depth = require(params.query_depth, "query_depth")?;
    let label = require(params.label, "label")?;

    let mut sampler = vocab.sampler(seed.child("words").rng());
    let mut pool: Vec<String> = Vec::new();
    let n = fit_units(&budget, 2, word_capacity(vocab), |n| {
        if pool.len() < n {
            let need = n - pool.len();
            pool.extend(sampler.take(need)?);
        }
        Ok(budget.estimate(&pool[..n].join(" ")))
    })?;
    if pool.len() < n + 1 {
        pool.extend(sampler.take(n + 1 - pool.len())?);
    }

    let (context_words, query) = match label {
        Label::Positive => {
            let query = pool[n - 1].clone();
            let mut words: Vec<String> = pool[..n - 1].to_vec();
            words.insert(depth_index(depth, n), query.clone());
            (words, query)
        }
        Label::Negative => (pool[..n].to_vec(), pool[n].clone()),
    };

    let instruction = match params.prompt_variant {
        2 => format!(
            "Is the word {} present in the context? Answer with yes or no.",
            quoted(&query)
        ),
        _ => format!(
            "Given the context, determine if the word {} is present. Answer with yes or no.",
            quoted(&query)
        ),
    };

    Ok(CaseParts {
        context: context_words.join(" "),
        instruction,
        reference: Answer::Binary(label == Label::Positive),
    })
}

pub fn string_search_seq(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let budget = require_budget(params)?;
    let len = require(params.sequence_length, "sequence_length")?;
    let label = require(params.label, "label")?;

    let mut sampler = vocab.sampler(seed.child("words").rng());
    let mut pool: Vec<String> = Vec::new();
    let n = fit_units(&budget, len + 1, word_capacity(vocab), |n| {
        if pool.len() < n {
            let need = n - pool.len();
            pool.extend(sampler.take(need)?);
        }
        Ok(budget.estimate(&pool[..n].join(" ")))
    })?;
    let context_words = &pool[..n];

    let mut place_rng = seed.child("place").rng();
    let start = place_rng.gen_range(0..=n - len);
    params.query_depth = Some(if n == len {
        0.0
    } else {
        start as f64 / (n - len) as f64
    });

    let mut query: Vec<String> = context_words[start..start + len].to_vec();
    if label == Label::Negative {
        // Swapping in a word absent from the whole context guarantees the
        // query matches no window.
        let at = place_rng.gen_range(0..len);
        query[at] = if pool.len() > n {
            pool[n].clone()
        } else {
            sampler.take_one()?
        };
    }

    let quoted_seq = quoted(&query.join(" "));
    let instruction = match params.prompt_variant {
        2 => format!(
            "Is the word sequence {quoted_seq} present in the context? Answer with yes or no."
        ),
        _ => format!(
            "Given the context, determine if the word sequence {quoted_seq} is present. \
             Answer with yes or no."
        ),
    };

    Ok(CaseParts {
        context: context_words.join(" "),
        instruction,
        reference: Answer::Binary(label == Label::Positive),
    })
}

fn render_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{k}: {v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn sample_pairs(
    params: &GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
    min_pairs: usize,
) -> Result<Vec<(String, String)>, GenError> {
    let budget = require_budget(params)?;
    let mut sampler = vocab.sampler(seed.child("pairs").rng());
    let mut pairs: Vec<(String, String)> = Vec::new();
    let n = fit_units(&budget, min_pairs, word_capacity(vocab) / 2, |n| {
        while pairs.len() < n {
            let mut two = sampler.take(2)?;
            let value = two.pop().expect("two words");
            let key = two.pop().expect("two words");
            pairs.push((key, value));
        }
        Ok(budget.estimate(&render_pairs(&pairs[..n])))
    })?;
    pairs.truncate(n);
    Ok(pairs)
}

pub fn key_value_search(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let depth = require(params.query_depth, "query_depth")?;
    let pairs = sample_pairs(params, vocab, seed, 2)?;
    let target = depth_index(depth, pairs.len());
    let (key, value) = pairs[target].clone();

    let instruction = format!(
        "The context contains key: value pairs. What is the value paired with the key {}? \
         Answer with the value only.",
        quoted(&key)
    );

    Ok(CaseParts {
        context: render_pairs(&pairs),
        instruction,
        reference: Answer::Text(value),
    })
}

pub fn batch_search(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let batch = require(params.batch_size, "batch_size")?;
    let pairs = sample_pairs(params, vocab, seed, batch.max(2))?;

    let mut pick_rng = seed.child("batch").rng();
    let picks = rand::seq::index::sample(&mut pick_rng, pairs.len(), batch);
    let keys: Vec<&str> = picks.iter().map(|i| pairs[i].0.as_str()).collect();
    let values: Vec<String> = picks.iter().map(|i| pairs[i].1.clone()).collect();

    let key_list = keys
        .iter()
        .map(|k| quoted(k))
        .collect::<Vec<_>>()
        .join(", ");
    let instruction = format!(
        "The context contains key: value pairs. For each of the keys {key_list}, find the \
         paired value. Answer with the values in the same order, separated by commas."
    );

    Ok(CaseParts {
        context: render_pairs(&pairs),
        instruction,
        reference: Answer::OrderedList(values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenBudget;
    use crate::snapshot::{grid_tuple, Task};

    fn base_params(budget: usize) -> GenParams {
        let mut p = GenParams::new();
        p.token_budget = Some(TokenBudget::new(budget));
        p
    }

    fn vocab() -> Vocabulary {
        Vocabulary::builtin()
    }

    #[test]
    fn word_search_positive_depth_zero_puts_query_first() {
        let mut p = base_params(200);
        p.query_depth = Some(0.0);
        p.label = Some(Label::Positive);
        let parts = string_search_word(&mut p, &vocab(), &Seed::new(1)).unwrap();
        let words: Vec<&str> = parts.context.split_whitespace().collect();
        let query = parts.instruction.split('"').nth(1).unwrap();
        assert_eq!(words[0], query);
        assert_eq!(parts.reference, Answer::Binary(true));
    }

    #[test]
    fn word_search_positive_midpoint_index() {
        // With depth 0.5 the query sits at floor(0.5 * (N - 1)).
        let mut p = base_params(200);
        p.query_depth = Some(0.5);
        p.label = Some(Label::Positive);
        let parts = string_search_word(&mut p, &vocab(), &Seed::new(2)).unwrap();
        let words: Vec<&str> = parts.context.split_whitespace().collect();
        let query = parts.instruction.split('"').nth(1).unwrap();
        let expect = (0.5 * (words.len() - 1) as f64).floor() as usize;
        assert_eq!(words[expect], query);
    }

    #[test]
    fn word_search_negative_query_absent() {
        let mut p = base_params(300);
        p.query_depth = Some(0.75);
        p.label = Some(Label::Negative);
        let parts = string_search_word(&mut p, &vocab(), &Seed::new(3)).unwrap();
        let query = parts.instruction.split('"').nth(1).unwrap();
        assert!(parts.context.split_whitespace().all(|w| w != query));
        assert_eq!(parts.reference, Answer::Binary(false));
    }

    #[test]
    fn seq_search_positive_is_a_window_negative_is_not() {
        for (label, seed) in [(Label::Positive, 4), (Label::Negative, 5)] {
            let mut p = base_params(300);
            p.sequence_length = Some(8);
            p.label = Some(label);
            let parts = string_search_seq(&mut p, &vocab(), &Seed::new(seed)).unwrap();
            let words: Vec<&str> = parts.context.split_whitespace().collect();
            let query: Vec<&str> = parts
                .instruction
                .split('"')
                .nth(1)
                .unwrap()
                .split_whitespace()
                .collect();
            assert_eq!(query.len(), 8);
            let found = words.windows(8).any(|w| w == query.as_slice());
            assert_eq!(found, label == Label::Positive);
        }
    }

    #[test]
    fn seq_search_negative_differs_in_one_position() {
        let mut p = base_params(300);
        p.sequence_length = Some(8);
        p.label = Some(Label::Negative);
        let seed = Seed::new(6);
        let parts = string_search_seq(&mut p, &vocab(), &seed).unwrap();
        let words: Vec<&str> = parts.context.split_whitespace().collect();
        let query: Vec<&str> = parts
            .instruction
            .split('"')
            .nth(1)
            .unwrap()
            .split_whitespace()
            .collect();
        // Hamming distance 1 from its source window.
        let best = words
            .windows(8)
            .map(|w| w.iter().zip(&query).filter(|(a, b)| **a != **b).count())
            .min()
            .unwrap();
        assert_eq!(best, 1);
    }

    #[test]
    fn key_value_depth_one_targets_final_pair() {
        let mut p = base_params(200);
        p.query_depth = Some(1.0);
        let parts = key_value_search(&mut p, &vocab(), &Seed::new(7)).unwrap();
        let last_pair = parts.context.rsplit(", ").next().unwrap();
        let (key, value) = last_pair.split_once(": ").unwrap();
        assert!(parts.instruction.contains(&quoted(key)));
        assert_eq!(parts.reference, Answer::Text(value.to_string()));
    }

    #[test]
    fn key_value_keys_are_unique() {
        let mut p = base_params(400);
        p.query_depth = Some(0.5);
        let parts = key_value_search(&mut p, &vocab(), &Seed::new(8)).unwrap();
        let query = parts.instruction.split('"').nth(1).unwrap();
        let hits = parts
            .context
            .split(", ")
            .filter(|pair| pair.split_once(": ").map(|(k, _)| k) == Some(query))
            .count();
        assert_eq!(hits, 1);
    }

    #[test]
    fn batch_search_values_align_with_keys() {
        let mut p = base_params(400);
        p.batch_size = Some(4);
        let parts = batch_search(&mut p, &vocab(), &Seed::new(9)).unwrap();
        let keys: Vec<&str> = parts.instruction.split('"').skip(1).step_by(2).collect();
        assert_eq!(keys.len(), 4);
        let Answer::OrderedList(values) = &parts.reference else {
            panic!("batch reference should be an ordered list");
        };
        for (key, value) in keys.iter().zip(values) {
            let pair = parts
                .context
                .split(", ")
                .find(|p| p.starts_with(&format!("{key}: ")))
                .unwrap();
            assert_eq!(pair, format!("{key}: {value}"));
        }
    }

    #[test]
    fn batch_of_one_degenerates_to_key_value_search() {
        let mut p = base_params(300);
        p.batch_size = Some(1);
        let parts = batch_search(&mut p, &vocab(), &Seed::new(10)).unwrap();
        let Answer::OrderedList(values) = &parts.reference else {
            panic!()
        };
        assert_eq!(values.len(), 1);
        let key = parts.instruction.split('"').nth(1).unwrap();
        let pair = parts
            .context
            .split(", ")
            .find(|p| p.starts_with(&format!("{key}: ")))
            .unwrap();
        assert_eq!(pair, format!("{key}: {}", values[0]));
    }

    #[test]
    fn ids_are_stable_for_axes() {
        let mut p = base_params(200);
        p.query_depth = Some(1.0);
        p.label = Some(Label::Positive);
        assert_eq!(
            grid_tuple(Task::StringSearchWord, &p),
            "depth=1,label=positive"
        );
    }
}
