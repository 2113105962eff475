//! Shared generation substrate: vocabulary loading and sampling, derived
//! seeds, gibberish words, and approximate token budgeting.
//!
//! Everything here is pure given its inputs. All randomness is drawn from
//! [`Seed`]-derived ChaCha streams, so identical inputs produce identical
//! outputs byte for byte.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Words that never enter a vocabulary, whatever the source file contains.
///
/// These are the tokens the instruction templates, the step renderings, and
/// the answer extraction pipeline treat as structure. Keeping them out of the
/// sampled word pool means a context item can never collide with a template
/// keyword, which the parse oracles and the Jaccard extraction rely on.
pub const RESERVED_WORDS: &[&str] = &[
    "the",
    "a",
    "an",
    "and",
    "or",
    "of",
    "in",
    "on",
    "at",
    "to",
    "from",
    "with",
    "for",
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "it",
    "its",
    "this",
    "that",
    "these",
    "those",
    "there",
    "here",
    "as",
    "by",
    "after",
    "before",
    "between",
    "into",
    "not",
    "yes",
    "no",
    "none",
    "empty",
    "nothing",
    "final",
    "state",
    "set",
    "sets",
    "list",
    "lists",
    "item",
    "items",
    "word",
    "words",
    "group",
    "groups",
    "key",
    "value",
    "values",
    "answer",
    "context",
    "memory",
    "step",
    "steps",
    "operation",
    "operations",
    "total",
    "quantity",
    "add",
    "adds",
    "added",
    "remove",
    "removes",
    "removed",
    "subtract",
    "subtracts",
    "multiply",
    "multiplied",
    "swap",
    "swaps",
    "swapped",
    "give",
    "gives",
    "receive",
    "receives",
    "contains",
    "holds",
    "has",
    "have",
    "alice",
    "bob",
    "charley",
    "dana",
    "first",
    "second",
    "last",
    "next",
    "element",
    "elements",
    "sequence",
    "label",
    "labels",
    "current",
    "their",
    "own",
    "agent",
    "agents",
    "report",
    "share",
    "snapshot",
    "only",
    "same",
    "different",
    "att",
    "present",
    "absent",
];

const BUILTIN_WORDS: &str = include_str!("../assets/words.txt");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("insufficient vocabulary: requested {requested} words, {available} available")]
    InsufficientVocabulary { requested: usize, available: usize },
    #[error("core items estimate {estimate} tokens, above budget ceiling {ceiling}")]
    BudgetTooSmall { estimate: usize, ceiling: usize },
    #[error("vocabulary file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("vocabulary too small: {got} usable words, need at least {need}")]
    VocabularyTooSmall { got: usize, need: usize },
}

/// Whether words come from a dictionary file or are synthesized gibberish.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabMode {
    Dictionary,
    Gibberish,
}

/// A deduplicated pool of lowercase words.
///
/// In `Gibberish` mode the word list is still kept: it is the exclusion set
/// that guarantees generated gibberish never spells a real dictionary word.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashSet<String>,
    mode: VocabMode,
}

impl Vocabulary {
    /// Minimum usable dictionary size. Small enough lists make accidental
    /// duplicate draws likely and sampling without replacement impossible.
    pub const MIN_WORDS: usize = 10_000;

    /// The word list shipped with the crate (30k lowercase words).
    pub fn builtin() -> Self {
        Self::from_reader_unchecked(BUILTIN_WORDS)
            .expect("builtin word list satisfies vocabulary invariants")
    }

    /// Load a vocabulary from a UTF-8 file with one word per line.
    /// Words are lowercased, deduplicated, and filtered to `a-z` only;
    /// reserved words are dropped.
    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader_unchecked(&text)
    }

    fn from_reader_unchecked(text: &str) -> Result<Self, CorpusError> {
        let reserved: HashSet<&str> = RESERVED_WORDS.iter().copied().collect();
        let mut seen = HashSet::new();
        let mut words = Vec::new();
        for line in text.lines() {
            let w = line.trim().to_lowercase();
            if w.is_empty() || !w.bytes().all(|b| b.is_ascii_lowercase()) {
                continue;
            }
            if reserved.contains(w.as_str()) {
                continue;
            }
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        if words.len() < Self::MIN_WORDS {
            return Err(CorpusError::VocabularyTooSmall {
                got: words.len(),
                need: Self::MIN_WORDS,
            });
        }
        let index = words.iter().cloned().collect();
        Ok(Self {
            words,
            index,
            mode: VocabMode::Dictionary,
        })
    }

    /// Switch to gibberish mode: sampling synthesizes random letter strings
    /// that are guaranteed absent from this dictionary.
    pub fn gibberish(mut self) -> Self {
        self.mode = VocabMode::Gibberish;
        self
    }

    pub fn mode(&self) -> VocabMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains(word)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Upper bound on how many distinct words a sampler can hand out.
    /// Gibberish synthesis is effectively unbounded.
    pub fn capacity_hint(&self) -> usize {
        match self.mode {
            VocabMode::Dictionary => self.words.len(),
            VocabMode::Gibberish => usize::MAX,
        }
    }

    /// Incremental without-replacement sampler bound to one RNG stream.
    pub fn sampler<'v>(&'v self, rng: ChaCha8Rng) -> WordSampler<'v> {
        WordSampler::new(self, rng)
    }
}

/// A deterministic derivation path from a master seed.
///
/// Child seeds are a pure function of `(master_seed, path)`: the path
/// components are hashed with the master seed to key a ChaCha stream, so
/// sibling tasks and samples never share randomness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed {
    pub master_seed: u64,
    pub path: Vec<String>,
}

impl Seed {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            path: Vec::new(),
        }
    }

    pub fn child(&self, component: impl Into<String>) -> Self {
        let mut path = self.path.clone();
        path.push(component.into());
        Self {
            master_seed: self.master_seed,
            path,
        }
    }

    /// The ChaCha stream for this node. Path components are length-prefixed
    /// before hashing so distinct paths can never collide byte-wise.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_le_bytes());
        for component in &self.path {
            hasher.update((component.len() as u64).to_le_bytes());
            hasher.update(component.as_bytes());
        }
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(key)
    }
}

/// Draw `n` words uniformly without replacement from `vocab` minus `exclude`.
pub fn sample_words(
    vocab: &Vocabulary,
    n: usize,
    rng: &Seed,
    exclude: &HashSet<String>,
) -> Result<Vec<String>, CorpusError> {
    let mut sampler = vocab.sampler(rng.rng());
    for w in exclude {
        sampler.exclude(w);
    }
    sampler.take(n)
}

/// A random all-lowercase letter string with length in `len_range`.
pub fn gibberish_word(rng: &mut ChaCha8Rng, len_range: (usize, usize)) -> String {
    let (min, max) = len_range;
    assert!(min >= 1 && min <= max, "invalid gibberish length range");
    let len = rng.gen_range(min..=max);
    (0..len)
        .map(|_| (b'a' + rng.gen_range(0..26u8)) as char)
        .collect()
}

/// Incremental without-replacement word source for one test case.
///
/// Dictionary mode walks a shuffled deck of the vocabulary; gibberish mode
/// synthesizes fresh strings, rejecting dictionary words and repeats. Either
/// way a word is handed out at most once per sampler.
pub struct WordSampler<'v> {
    vocab: &'v Vocabulary,
    rng: ChaCha8Rng,
    deck: Vec<u32>,
    pos: usize,
    excluded: HashSet<String>,
    emitted: HashSet<String>,
}

const GIBBERISH_LEN_RANGE: (usize, usize) = (4, 12);

impl<'v> WordSampler<'v> {
    fn new(vocab: &'v Vocabulary, mut rng: ChaCha8Rng) -> Self {
        let deck = match vocab.mode {
            VocabMode::Dictionary => {
                let mut deck: Vec<u32> = (0..vocab.words.len() as u32).collect();
                deck.shuffle(&mut rng);
                deck
            }
            VocabMode::Gibberish => Vec::new(),
        };
        Self {
            vocab,
            rng,
            deck,
            pos: 0,
            excluded: HashSet::new(),
            emitted: HashSet::new(),
        }
    }

    /// Mark a word as never to be emitted by this sampler.
    pub fn exclude(&mut self, word: &str) {
        self.excluded.insert(word.to_string());
    }

    pub fn take_one(&mut self) -> Result<String, CorpusError> {
        Ok(self.take(1)?.pop().expect("take(1) yields one word"))
    }

    /// Draw `n` fresh words.
    pub fn take(&mut self, n: usize) -> Result<Vec<String>, CorpusError> {
        let mut out = Vec::with_capacity(n);
        match self.vocab.mode {
            VocabMode::Dictionary => {
                while out.len() < n {
                    let Some(&idx) = self.deck.get(self.pos) else {
                        return Err(CorpusError::InsufficientVocabulary {
                            requested: n,
                            available: out.len(),
                        });
                    };
                    self.pos += 1;
                    let w = &self.vocab.words[idx as usize];
                    if self.excluded.contains(w) {
                        continue;
                    }
                    self.emitted.insert(w.clone());
                    out.push(w.clone());
                }
            }
            VocabMode::Gibberish => {
                while out.len() < n {
                    let w = gibberish_word(&mut self.rng, GIBBERISH_LEN_RANGE);
                    if self.vocab.contains(&w)
                        || self.excluded.contains(&w)
                        || self.emitted.contains(&w)
                    {
                        continue;
                    }
                    self.emitted.insert(w.clone());
                    out.push(w);
                }
            }
        }
        Ok(out)
    }
}

/// How text length maps to approximate model tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenEstimator {
    /// `ceil(char_count / ratio)`
    CharsPerToken(f64),
    /// `ceil(whitespace_word_count * ratio)`
    WordsPerToken(f64),
}

/// Default tokens-per-word ratio: the usual ~0.75 words per token heuristic.
pub const DEFAULT_TOKENS_PER_WORD: f64 = 4.0 / 3.0;

/// Target context size in estimator tokens plus an acceptance band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub target_tokens: usize,
    pub tolerance_fraction: f64,
    pub estimator: TokenEstimator,
}

impl TokenBudget {
    pub fn new(target_tokens: usize) -> Self {
        Self {
            target_tokens,
            tolerance_fraction: 0.10,
            estimator: TokenEstimator::WordsPerToken(DEFAULT_TOKENS_PER_WORD),
        }
    }

    pub fn estimate(&self, text: &str) -> usize {
        match self.estimator {
            TokenEstimator::CharsPerToken(ratio) => {
                (text.chars().count() as f64 / ratio).ceil() as usize
            }
            TokenEstimator::WordsPerToken(ratio) => {
                (text.split_whitespace().count() as f64 * ratio).ceil() as usize
            }
        }
    }

    /// Estimate for `words` joined with single spaces, without building the
    /// string. `char_count` is the sum of the words' character counts.
    fn estimate_counts(&self, word_count: usize, char_count: usize) -> usize {
        match self.estimator {
            TokenEstimator::CharsPerToken(ratio) => {
                let chars = char_count + word_count.saturating_sub(1);
                (chars as f64 / ratio).ceil() as usize
            }
            TokenEstimator::WordsPerToken(ratio) => (word_count as f64 * ratio).ceil() as usize,
        }
    }

    pub fn low(&self) -> usize {
        (self.target_tokens as f64 * (1.0 - self.tolerance_fraction)).floor() as usize
    }

    pub fn high(&self) -> usize {
        (self.target_tokens as f64 * (1.0 + self.tolerance_fraction)).ceil() as usize
    }

    pub fn in_band(&self, estimate: usize) -> bool {
        estimate >= self.low() && estimate <= self.high()
    }
}

/// Pad `core_items` with filler words until the rendered estimate lands in
/// the budget band. Fillers are spliced at random positions; the relative
/// order and multiplicity of core items is preserved and fillers never
/// collide with a core item.
pub fn fill_to_budget(
    core_items: &[String],
    vocab: &Vocabulary,
    budget: &TokenBudget,
    rng: &Seed,
) -> Result<Vec<String>, CorpusError> {
    let mut items: Vec<String> = core_items.to_vec();
    let mut chars: usize = items.iter().map(|w| w.chars().count()).sum();
    let estimate = budget.estimate_counts(items.len(), chars);
    if estimate > budget.high() {
        return Err(CorpusError::BudgetTooSmall {
            estimate,
            ceiling: budget.high(),
        });
    }
    let mut chacha = rng.rng();
    let mut sampler = vocab.sampler(rng.child("filler").rng());
    for w in core_items {
        sampler.exclude(w);
    }
    while budget.estimate_counts(items.len(), chars) < budget.low() {
        let word = sampler.take_one()?;
        chars += word.chars().count();
        let at = chacha.gen_range(0..=items.len());
        items.insert(at, word);
    }
    debug_assert_eq!(
        budget.estimate(&items.join(" ")),
        budget.estimate_counts(items.len(), chars)
    );
    Ok(items)
}
