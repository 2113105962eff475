//! Property tests for the spec-level invariants: determinism, budget bands,
//! collision freedom, normalization idempotence, and metric bounds.

use std::collections::HashSet;

use proptest::prelude::*;

use memprobe::corpus::{
    fill_to_budget, gibberish_word, sample_words, Seed, TokenBudget, Vocabulary,
};
use memprobe::metrics::{exact_match, jaccard, lcs_length, normalize, rouge_l, RougeMode};
use memprobe::snapshot::Answer;

fn vocab() -> &'static Vocabulary {
    static VOCAB: std::sync::OnceLock<Vocabulary> = std::sync::OnceLock::new();
    VOCAB.get_or_init(Vocabulary::builtin)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    // Budget band: filling always lands inside the tolerance window for
    // targets across the whole sweep range, and fillers never collide with
    // core items.
    #[test]
    fn fill_to_budget_band_and_collision_freedom(
        target in 500usize..16_000,
        seed in any::<u64>(),
        core_size in 0usize..12,
    ) {
        let budget = TokenBudget::new(target);
        let core: Vec<String> = (0..core_size).map(|i| format!("core{i}")).collect();
        let filled = fill_to_budget(&core, vocab(), &budget, &Seed::new(seed)).unwrap();
        let estimate = budget.estimate(&filled.join(" "));
        prop_assert!(budget.in_band(estimate), "estimate {} outside [{}, {}]",
            estimate, budget.low(), budget.high());
        let core_set: HashSet<&String> = core.iter().collect();
        for w in &core {
            prop_assert_eq!(filled.iter().filter(|x| x == &w).count(), 1);
        }
        let fillers: Vec<&String> = filled.iter().filter(|w| !core_set.contains(w)).collect();
        let distinct: HashSet<&&String> = fillers.iter().collect();
        prop_assert_eq!(distinct.len(), fillers.len(), "filler words repeat");
    }

    #[test]
    fn sampling_is_deterministic_per_seed(seed in any::<u64>(), n in 0usize..200) {
        let a = sample_words(vocab(), n, &Seed::new(seed), &HashSet::new()).unwrap();
        let b = sample_words(vocab(), n, &Seed::new(seed), &HashSet::new()).unwrap();
        prop_assert_eq!(&a, &b);
        let distinct: HashSet<&String> = a.iter().collect();
        prop_assert_eq!(distinct.len(), a.len());
    }

    #[test]
    fn gibberish_is_deterministic_and_well_formed(
        seed in any::<u64>(),
        min in 1usize..6,
        extra in 0usize..6,
    ) {
        let range = (min, min + extra);
        let a = gibberish_word(&mut Seed::new(seed).rng(), range);
        let b = gibberish_word(&mut Seed::new(seed).rng(), range);
        prop_assert_eq!(&a, &b);
        prop_assert!(a.len() >= min && a.len() <= min + extra);
        prop_assert!(a.bytes().all(|c| c.is_ascii_lowercase()));
    }

    #[test]
    fn normalization_is_idempotent(text in ".{0,200}") {
        let once = normalize(&text);
        let twice = normalize(&once.join(" "));
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn estimates_are_monotone_in_text(a in "[a-z ]{0,200}", b in "[a-z ]{0,100}") {
        let budget = TokenBudget::new(1000);
        let combined = format!("{a} {b}");
        prop_assert!(budget.estimate(&combined) >= budget.estimate(&a));
    }

    // Every metric stays inside [0, 1] on arbitrary text.
    #[test]
    fn scores_are_bounded(reference in "[a-z ]{1,40}", response in ".{0,80}") {
        for value in [
            rouge_l(&reference, &response, RougeMode::F1).value,
            rouge_l(&reference, &response, RougeMode::Recall).value,
            exact_match(&Answer::Text(reference.clone()), &response).value,
        ] {
            prop_assert!((0.0..=1.0).contains(&value), "score {} out of bounds", value);
        }
        let set: std::collections::BTreeSet<String> =
            normalize(&reference).into_iter().collect();
        let value = jaccard(&Answer::WordSet(set), &response).value;
        prop_assert!((0.0..=1.0).contains(&value));
    }

    // With equal lengths, precision equals recall and F1 collapses to it.
    #[test]
    fn f1_equals_recall_for_equal_lengths(
        tokens in proptest::collection::vec("[a-z]{1,4}", 1..12),
        other in proptest::collection::vec("[a-z]{1,4}", 1..12),
    ) {
        let n = tokens.len().min(other.len());
        let reference = tokens[..n].join(" ");
        let response = other[..n].join(" ");
        let f1 = rouge_l(&reference, &response, RougeMode::F1).value;
        let recall = rouge_l(&reference, &response, RougeMode::Recall).value;
        prop_assert!((f1 - recall).abs() < 1e-12);
        prop_assert!(f1 <= 1.0);
    }

    // DP LCS agrees with brute-force subsequence enumeration.
    #[test]
    fn lcs_matches_brute_force(
        a in proptest::collection::vec("[pqr]", 0..10),
        b in proptest::collection::vec("[pqr]", 0..10),
    ) {
        let mut best = 0usize;
        for mask in 0u32..(1 << a.len()) {
            let picked: Vec<&String> = a.iter().enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, w)| w)
                .collect();
            let mut it = b.iter();
            if picked.iter().all(|w| it.any(|x| &x == w)) {
                best = best.max(picked.len());
            }
        }
        prop_assert_eq!(lcs_length(&a, &b), best);
    }

    // Appending a shared token to both sides never decreases the LCS.
    #[test]
    fn lcs_is_monotone_under_shared_extension(
        a in proptest::collection::vec("[pqrs]", 0..12),
        b in proptest::collection::vec("[pqrs]", 0..12),
    ) {
        let base = lcs_length(&a, &b);
        let mut a2 = a.clone();
        let mut b2 = b.clone();
        a2.push("shared".to_string());
        b2.push("shared".to_string());
        prop_assert!(lcs_length(&a2, &b2) > base);
    }
}
