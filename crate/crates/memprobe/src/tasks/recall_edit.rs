//! Recall and edit family: verbatim snapshots, global word replacement,
//! positional overwrites, and elementwise numeric updates.

use std::collections::HashSet;

use rand::Rng;

use crate::corpus::{Seed, Vocabulary};
use crate::snapshot::{Answer, GenParams, Replacement};

use super::{
    fit_units, ordinal, quoted, require, require_budget, word_capacity, CaseParts, GenError,
};

pub fn snapshot(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
    numeric: bool,
) -> Result<CaseParts, GenError> {
    let budget = require_budget(params)?;
    let mut sampler = vocab.sampler(seed.child("words").rng());
    let mut num_rng = seed.child("numbers").rng();
    let mut pool: Vec<String> = Vec::new();
    let max_units = if numeric {
        usize::MAX
    } else {
        word_capacity(vocab)
    };
    let n = fit_units(&budget, 2, max_units, |n| {
        while pool.len() < n {
            if numeric {
                pool.push(num_rng.gen_range(0..1000u32).to_string());
            } else {
                pool.push(sampler.take_one()?);
            }
        }
        Ok(budget.estimate(&pool[..n].join(" ")))
    })?;
    let context = pool[..n].join(" ");
    Ok(CaseParts {
        instruction: "Share a snapshot of the entire previous context as a verbatim copy."
            .to_string(),
        reference: Answer::Text(context.clone()),
        context,
    })
}

pub fn replace_all(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let budget = require_budget(params)?;
    let density = require(params.density, "density")?;
    let replacement = require(params.replacement, "replacement")?;

    let mut sampler = vocab.sampler(seed.child("words").rng());
    let mut pool: Vec<String> = Vec::new();
    let n = fit_units(&budget, 4, word_capacity(vocab), |n| {
        if pool.len() < n {
            let need = n - pool.len();
            pool.extend(sampler.take(need)?);
        }
        Ok(budget.estimate(&pool[..n].join(" ")))
    })?;

    let occurrences = ((density * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
    let target = sampler.take_one()?;
    let substitute = sampler.take_one()?;

    let mut place_rng = seed.child("place").rng();
    let positions: HashSet<usize> = rand::seq::index::sample(&mut place_rng, n, occurrences)
        .into_iter()
        .collect();

    let mut fillers = pool[..n - occurrences].iter();
    let context_words: Vec<&str> = (0..n)
        .map(|i| {
            if positions.contains(&i) {
                target.as_str()
            } else {
                fillers.next().expect("enough fillers").as_str()
            }
        })
        .collect();

    let reference_words: Vec<&str> = context_words
        .iter()
        .filter_map(|w| {
            if *w == target {
                match replacement {
                    Replacement::Word => Some(substitute.as_str()),
                    Replacement::Delete => None,
                }
            } else {
                Some(*w)
            }
        })
        .collect();

    let instruction = match (params.prompt_variant, replacement) {
        (2, Replacement::Word) => format!(
            "Copy the previous context but replace the word {} with {}.",
            quoted(&target),
            quoted(&substitute)
        ),
        (2, Replacement::Delete) => format!(
            "Copy the previous context but delete all occurrences of the word {}.",
            quoted(&target)
        ),
        (_, Replacement::Word) => format!(
            "Repeat the previous context and replace the word {} with {}.",
            quoted(&target),
            quoted(&substitute)
        ),
        (_, Replacement::Delete) => format!(
            "Repeat the previous context and delete all occurrences of the word {}.",
            quoted(&target)
        ),
    };

    Ok(CaseParts {
        context: context_words.join(" "),
        instruction,
        reference: Answer::Text(reference_words.join(" ")),
    })
}

pub fn overwrite_positions(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let budget = require_budget(params)?;
    let nth = require(params.nth, "nth")?;
    let replacement = require(params.replacement, "replacement")?;

    let mut sampler = vocab.sampler(seed.child("words").rng());
    let mut pool: Vec<String> = Vec::new();
    let n = fit_units(&budget, 2, word_capacity(vocab), |n| {
        if pool.len() < n {
            let need = n - pool.len();
            pool.extend(sampler.take(need)?);
        }
        Ok(budget.estimate(&pool[..n].join(" ")))
    })?;
    let words = &pool[..n];
    let substitute = sampler.take_one()?;

    // Positions are 1-based: every word whose position is a multiple of nth.
    let reference_words: Vec<&str> = words
        .iter()
        .enumerate()
        .filter_map(|(i, w)| {
            if (i + 1) % nth == 0 {
                match replacement {
                    Replacement::Word => Some(substitute.as_str()),
                    Replacement::Delete => None,
                }
            } else {
                Some(w.as_str())
            }
        })
        .collect();

    let instruction = match replacement {
        Replacement::Word => format!(
            "Repeat the previous context after overwriting every {} word with {}.",
            ordinal(nth),
            quoted(&substitute)
        ),
        Replacement::Delete => format!(
            "Repeat the previous context after deleting every {} word.",
            ordinal(nth)
        ),
    };

    Ok(CaseParts {
        context: words.join(" "),
        instruction,
        reference: Answer::Text(reference_words.join(" ")),
    })
}

pub fn functional_updates(params: &mut GenParams, seed: &Seed) -> Result<CaseParts, GenError> {
    let budget = require_budget(params)?;
    let function = require(params.function, "function")?;

    let mut num_rng = seed.child("numbers").rng();
    let mut numbers: Vec<i64> = Vec::new();
    let n = fit_units(&budget, 2, usize::MAX, |n| {
        while numbers.len() < n {
            numbers.push(num_rng.gen_range(1..1000i64));
        }
        let rendered = numbers[..n]
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        Ok(budget.estimate(&rendered))
    })?;
    numbers.truncate(n);

    let context = numbers
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    let reference = numbers
        .iter()
        .map(|&x| function.apply(x).to_string())
        .collect::<Vec<_>>()
        .join(" ");

    let instruction = match function {
        crate::snapshot::UpdateFn::Add(k) => {
            format!("Repeat the previous context, adding {k} to every number.")
        }
        crate::snapshot::UpdateFn::Subtract(k) => {
            format!("Repeat the previous context, subtracting {k} from every number.")
        }
        crate::snapshot::UpdateFn::Multiply(k) => {
            format!("Repeat the previous context, multiplying every number by {k}.")
        }
    };

    Ok(CaseParts {
        context,
        instruction,
        reference: Answer::Text(reference),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenBudget;
    use crate::snapshot::UpdateFn;

    fn base_params(budget: usize) -> GenParams {
        let mut p = GenParams::new();
        p.token_budget = Some(TokenBudget::new(budget));
        p
    }

    #[test]
    fn snapshot_reference_is_context_verbatim() {
        let mut p = base_params(200);
        let parts = snapshot(&mut p, &Vocabulary::builtin(), &Seed::new(1), false).unwrap();
        assert_eq!(parts.reference, Answer::Text(parts.context.clone()));
    }

    #[test]
    fn numeric_snapshot_tokens_all_parse() {
        let mut p = base_params(200);
        let parts = snapshot(&mut p, &Vocabulary::builtin(), &Seed::new(2), true).unwrap();
        for token in parts.context.split_whitespace() {
            let n: u32 = token.parse().expect("numeric token");
            assert!(n < 1000);
        }
    }

    #[test]
    fn replace_all_substitutes_every_occurrence() {
        let mut p = base_params(200);
        p.density = Some(0.4);
        p.replacement = Some(Replacement::Word);
        let parts = replace_all(&mut p, &Vocabulary::builtin(), &Seed::new(3)).unwrap();
        let target = parts.instruction.split('"').nth(1).unwrap();
        let substitute = parts.instruction.split('"').nth(3).unwrap();
        let Answer::Text(reference) = &parts.reference else {
            panic!()
        };
        assert!(reference.split_whitespace().all(|w| w != target));
        let n = parts.context.split_whitespace().count();
        let occurrences = parts
            .context
            .split_whitespace()
            .filter(|w| *w == target)
            .count();
        let expected = (0.4 * n as f64).round() as usize;
        assert!(occurrences.abs_diff(expected) <= 1);
        assert_eq!(
            reference
                .split_whitespace()
                .filter(|w| *w == substitute)
                .count(),
            occurrences
        );
        assert_eq!(reference.split_whitespace().count(), n);
    }

    #[test]
    fn replace_all_delete_drops_occurrences() {
        let mut p = base_params(200);
        p.density = Some(0.2);
        p.replacement = Some(Replacement::Delete);
        let parts = replace_all(&mut p, &Vocabulary::builtin(), &Seed::new(4)).unwrap();
        let target = parts.instruction.split('"').nth(1).unwrap();
        let Answer::Text(reference) = &parts.reference else {
            panic!()
        };
        let n = parts.context.split_whitespace().count();
        let occurrences = parts
            .context
            .split_whitespace()
            .filter(|w| *w == target)
            .count();
        assert_eq!(reference.split_whitespace().count(), n - occurrences);
        assert!(reference.split_whitespace().all(|w| w != target));
    }

    #[test]
    fn overwrite_every_second_word() {
        let mut p = base_params(20);
        p.nth = Some(2);
        p.replacement = Some(Replacement::Word);
        let parts = overwrite_positions(&mut p, &Vocabulary::builtin(), &Seed::new(5)).unwrap();
        let substitute = parts.instruction.split('"').nth(1).unwrap();
        let context: Vec<&str> = parts.context.split_whitespace().collect();
        let Answer::Text(reference) = &parts.reference else {
            panic!()
        };
        let reference: Vec<&str> = reference.split_whitespace().collect();
        assert_eq!(context.len(), reference.len());
        for (i, (c, r)) in context.iter().zip(&reference).enumerate() {
            if (i + 1) % 2 == 0 {
                assert_eq!(*r, substitute);
            } else {
                assert_eq!(r, c);
            }
        }
    }

    #[test]
    fn overwrite_beyond_word_count_is_identity() {
        let mut p = base_params(20);
        p.nth = Some(500);
        p.replacement = Some(Replacement::Word);
        let parts = overwrite_positions(&mut p, &Vocabulary::builtin(), &Seed::new(12)).unwrap();
        assert_eq!(parts.reference, Answer::Text(parts.context.clone()));
    }

    #[test]
    fn overwrite_delete_drops_every_third_word() {
        let mut p = base_params(20);
        p.nth = Some(3);
        p.replacement = Some(Replacement::Delete);
        let parts = overwrite_positions(&mut p, &Vocabulary::builtin(), &Seed::new(6)).unwrap();
        let context: Vec<&str> = parts.context.split_whitespace().collect();
        let Answer::Text(reference) = &parts.reference else {
            panic!()
        };
        let expected: Vec<&str> = context
            .iter()
            .enumerate()
            .filter(|(i, _)| (i + 1) % 3 != 0)
            .map(|(_, w)| *w)
            .collect();
        assert_eq!(reference.split_whitespace().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn functional_updates_apply_elementwise() {
        for (function, seed) in [
            (UpdateFn::Add(3), 7),
            (UpdateFn::Subtract(1), 8),
            (UpdateFn::Multiply(2), 9),
        ] {
            let mut p = base_params(100);
            p.function = Some(function);
            let parts = functional_updates(&mut p, &Seed::new(seed)).unwrap();
            let inputs: Vec<i64> = parts
                .context
                .split_whitespace()
                .map(|t| t.parse().unwrap())
                .collect();
            let Answer::Text(reference) = &parts.reference else {
                panic!()
            };
            let outputs: Vec<i64> = reference
                .split_whitespace()
                .map(|t| t.parse().unwrap())
                .collect();
            assert_eq!(inputs.len(), outputs.len());
            for (x, y) in inputs.iter().zip(&outputs) {
                assert_eq!(*y, function.apply(*x));
            }
        }
    }
}
