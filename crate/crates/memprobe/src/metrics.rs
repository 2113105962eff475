//! Scoring: exact match with answer extraction, ROUGE-L (F1 and recall),
//! and Jaccard set overlap, plus the shared text normalization they use.

use std::collections::BTreeSet;

use crate::corpus::RESERVED_WORDS;
use crate::snapshot::{Answer, MetricKind, TestCase};

/// LCS inputs longer than this are truncated (with a note on the score).
pub const MAX_LCS_TOKENS: usize = 8192;

/// Maximum response length (in tokens) for the lenient tail-extraction rule
/// of exact match.
const TAIL_RULE_MAX_TOKENS: usize = 10;

/// A score in [0, 1] with the metric that produced it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Score {
    pub value: f64,
    pub metric: MetricKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_note: Option<String>,
}

impl Score {
    fn new(value: f64, metric: MetricKind) -> Self {
        Self {
            value,
            metric,
            extraction_note: None,
        }
    }

    fn with_note(value: f64, metric: MetricKind, note: impl Into<String>) -> Self {
        Self {
            value,
            metric,
            extraction_note: Some(note.into()),
        }
    }
}

/// Lowercase, whitespace-split, edge punctuation stripped per token.
/// A leading minus sign on a numeral survives. Idempotent.
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(normalize_token)
        .collect()
}

fn normalize_token(raw: &str) -> Option<String> {
    let lower = raw.to_lowercase();
    let bytes = lower.as_bytes();
    let mut start = bytes.iter().position(|b| b.is_ascii_alphanumeric())?;
    let end = bytes
        .iter()
        .rposition(|b| b.is_ascii_alphanumeric())
        .expect("some alphanumeric byte exists");
    if start > 0 && bytes[start - 1] == b'-' && bytes[start].is_ascii_digit() {
        start -= 1;
    }
    Some(lower[start..=end].to_string())
}

/// Token-level longest common subsequence length, by dynamic programming
/// over two rolling rows. Inputs are truncated to [`MAX_LCS_TOKENS`].
pub fn lcs_length<A: AsRef<str>, B: AsRef<str>>(a: &[A], b: &[B]) -> usize {
    let a = &a[..a.len().min(MAX_LCS_TOKENS)];
    let b = &b[..b.len().min(MAX_LCS_TOKENS)];
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0u32; b.len() + 1];
    let mut cur = vec![0u32; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            cur[j + 1] = if ai.as_ref() == bj.as_ref() {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RougeMode {
    F1,
    Recall,
}

/// ROUGE-L over normalized tokens. Recall = LCS/|ref|, precision = LCS/|gen|;
/// F1 = 2PR/(P+R). Zero when either side is empty.
pub fn rouge_l(reference: &str, response: &str, mode: RougeMode) -> Score {
    let metric = match mode {
        RougeMode::F1 => MetricKind::RougeL,
        RougeMode::Recall => MetricKind::RougeLRecall,
    };
    let ref_tokens = normalize(reference);
    let gen_tokens = normalize(response);
    if ref_tokens.is_empty() || gen_tokens.is_empty() {
        return Score::new(0.0, metric);
    }
    let truncated = ref_tokens.len() > MAX_LCS_TOKENS || gen_tokens.len() > MAX_LCS_TOKENS;
    let ref_len = ref_tokens.len().min(MAX_LCS_TOKENS) as f64;
    let gen_len = gen_tokens.len().min(MAX_LCS_TOKENS) as f64;
    let lcs = lcs_length(&ref_tokens, &gen_tokens) as f64;
    let recall = lcs / ref_len;
    let precision = lcs / gen_len;
    let value = match mode {
        RougeMode::Recall => recall,
        RougeMode::F1 => {
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        }
    };
    if truncated {
        Score::with_note(
            value,
            metric,
            format!("inputs truncated to {MAX_LCS_TOKENS} tokens"),
        )
    } else {
        Score::new(value, metric)
    }
}

/// Exact match with extraction: binary answers take the first standalone
/// yes/no token; text and integer answers must match the whole normalized
/// response, or appear as its tail when the response is short.
pub fn exact_match(reference: &Answer, response: &str) -> Score {
    let metric = MetricKind::ExactMatch;
    let resp_tokens = normalize(response);
    match reference {
        Answer::Binary(expected) => {
            let extracted = resp_tokens.iter().find_map(|t| match t.as_str() {
                "yes" => Some(true),
                "no" => Some(false),
                _ => None,
            });
            match extracted {
                Some(got) if got == *expected => Score::new(1.0, metric),
                Some(_) => Score::new(0.0, metric),
                None => Score::with_note(0.0, metric, "no yes/no token found"),
            }
        }
        Answer::Text(_) | Answer::Integer(_) => {
            let ref_tokens = normalize(&reference.canonical_text());
            if ref_tokens.is_empty() {
                let value = if resp_tokens.is_empty() { 1.0 } else { 0.0 };
                return Score::new(value, metric);
            }
            if resp_tokens == ref_tokens {
                return Score::new(1.0, metric);
            }
            if resp_tokens.len() <= TAIL_RULE_MAX_TOKENS
                && resp_tokens.len() >= ref_tokens.len()
                && resp_tokens[resp_tokens.len() - ref_tokens.len()..] == ref_tokens[..]
            {
                return Score::with_note(1.0, metric, "matched via tail rule");
            }
            Score::new(0.0, metric)
        }
        _ => Score::with_note(0.0, metric, "exact match on non-scalar reference"),
    }
}

/// Pull a word set out of free-form text: normalized tokens minus reserved
/// filler words. Tokens that appear in the reference are always kept, so the
/// identity property holds even for references that collide with fillers.
fn extract_word_set(tokens: &[String], reference: &BTreeSet<String>) -> BTreeSet<String> {
    tokens
        .iter()
        .filter(|t| reference.contains(*t) || !RESERVED_WORDS.contains(&t.as_str()))
        .cloned()
        .collect()
}

fn set_overlap(reference: &BTreeSet<String>, got: &BTreeSet<String>) -> f64 {
    if reference.is_empty() && got.is_empty() {
        return 1.0;
    }
    let intersection = reference.intersection(got).count() as f64;
    let union = reference.union(got).count() as f64;
    intersection / union
}

/// Jaccard overlap for word-set answers; for agent-set answers, the
/// unweighted mean of per-agent overlaps, a missing agent section scoring 0.
pub fn jaccard(reference: &Answer, response: &str) -> Score {
    let metric = MetricKind::Jaccard;
    let tokens = normalize(response);
    match reference {
        Answer::WordSet(expected) => Score::new(
            set_overlap(expected, &extract_word_set(&tokens, expected)),
            metric,
        ),
        Answer::AgentSets(expected) => {
            if expected.is_empty() {
                return Score::with_note(0.0, metric, "reference has no agents");
            }
            // Locate each agent's section: tokens after its name, up to the
            // next agent name. Tokens before the first name are preamble.
            let names: Vec<String> = expected.keys().map(|k| k.to_lowercase()).collect();
            let mut sections: std::collections::BTreeMap<String, Vec<String>> =
                std::collections::BTreeMap::new();
            let mut current: Option<&mut Vec<String>> = None;
            for token in &tokens {
                if let Some(name) = names.iter().find(|n| *n == token) {
                    current = Some(sections.entry(name.clone()).or_default());
                } else if let Some(section) = current.as_deref_mut() {
                    section.push(token.clone());
                }
            }
            let mut total = 0.0;
            let mut missing = Vec::new();
            for (agent, expected_set) in expected {
                match sections.get(&agent.to_lowercase()) {
                    Some(section) => {
                        total +=
                            set_overlap(expected_set, &extract_word_set(section, expected_set));
                    }
                    None => missing.push(agent.as_str()),
                }
            }
            let value = total / expected.len() as f64;
            if missing.is_empty() {
                Score::new(value, metric)
            } else {
                Score::with_note(
                    value,
                    metric,
                    format!("missing sections: {}", missing.join(", ")),
                )
            }
        }
        _ => Score::with_note(0.0, metric, "jaccard on non-set reference"),
    }
}

/// Score a response against a case using the case's metric.
pub fn score_case(case: &TestCase, response: &str) -> Score {
    match case.metric {
        MetricKind::ExactMatch => exact_match(&case.reference, response),
        MetricKind::RougeL => rouge_l(&case.reference.canonical_text(), response, RougeMode::F1),
        MetricKind::RougeLRecall => rouge_l(
            &case.reference.canonical_text(),
            response,
            RougeMode::Recall,
        ),
        MetricKind::Jaccard => jaccard(&case.reference, response),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn toks(s: &str) -> Vec<String> {
        normalize(s)
    }

    #[test]
    fn normalization_is_idempotent_and_strips_edges() {
        assert_eq!(toks("Hello, World!"), vec!["hello", "world"]);
        assert_eq!(toks("(-15)."), vec!["-15"]);
        assert_eq!(toks("'quoted'"), vec!["quoted"]);
        assert_eq!(toks(""), Vec::<String>::new());
        let once = toks("A b., C!");
        let twice = toks(&once.join(" "));
        assert_eq!(once, twice);
    }

    #[test]
    fn lcs_hand_cases() {
        assert_eq!(lcs_length(&toks("a b c"), &toks("a c")), 2);
        let x = toks("p q r s");
        assert_eq!(lcs_length(&x, &x), 4);
        assert_eq!(lcs_length(&x, &toks("")), 0);
    }

    #[test]
    fn lcs_appending_shared_token_never_decreases() {
        let a = toks("k m q z");
        let b = toks("m z k");
        let base = lcs_length(&a, &b);
        let mut a2 = a.clone();
        let mut b2 = b.clone();
        a2.push("shared".into());
        b2.push("shared".into());
        assert!(lcs_length(&a2, &b2) > base);
    }

    #[test]
    fn rouge_l_hand_case() {
        // ref "a c", generated "a b c d": LCS 2, P 0.5, R 1.0, F1 2/3.
        let recall = rouge_l("a c", "a b c d", RougeMode::Recall);
        assert!((recall.value - 1.0).abs() < 1e-9);
        let f1 = rouge_l("a c", "a b c d", RougeMode::F1);
        assert!((f1.value - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn rouge_l_identity_and_disjoint() {
        assert_eq!(rouge_l("x y z", "x y z", RougeMode::F1).value, 1.0);
        assert_eq!(rouge_l("x y z", "x y z", RougeMode::Recall).value, 1.0);
        assert_eq!(rouge_l("x y", "p q", RougeMode::F1).value, 0.0);
        assert_eq!(rouge_l("x y", "", RougeMode::F1).value, 0.0);
        assert_eq!(rouge_l("", "x", RougeMode::Recall).value, 0.0);
    }

    #[test]
    fn exact_match_binary_extraction() {
        let yes = Answer::Binary(true);
        assert_eq!(exact_match(&yes, "Yes.").value, 1.0);
        assert_eq!(exact_match(&yes, "The answer is yes").value, 1.0);
        assert_eq!(exact_match(&yes, "no").value, 0.0);
        let empty = exact_match(&yes, "");
        assert_eq!(empty.value, 0.0);
        assert!(empty.extraction_note.is_some());
    }

    #[test]
    fn exact_match_tail_rule() {
        let answer = Answer::Integer(15);
        assert_eq!(exact_match(&answer, "The final result is 15").value, 1.0);
        assert_eq!(exact_match(&answer, "15").value, 1.0);
        assert_eq!(exact_match(&answer, "The result is 15 probably").value, 0.0);
        let too_long = format!("{} 15", ["w"; 11].join(" "));
        assert_eq!(exact_match(&answer, &too_long).value, 0.0);
    }

    #[test]
    fn oversized_inputs_truncate_with_note() {
        let long = vec!["tok"; MAX_LCS_TOKENS + 100].join(" ");
        let score = rouge_l(&long, &long, RougeMode::F1);
        assert_eq!(score.value, 1.0);
        assert!(score
            .extraction_note
            .as_deref()
            .unwrap()
            .contains("truncated"));
    }

    #[test]
    fn jaccard_hand_cases() {
        let set: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let reference = Answer::WordSet(set.clone());
        assert!((jaccard(&reference, "b, c").value - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard(&reference, "a, b").value, 1.0);
        assert_eq!(jaccard(&Answer::WordSet(BTreeSet::new()), "").value, 1.0);
        // Filler words around the items are ignored.
        assert_eq!(jaccard(&reference, "The final set is: a, b").value, 1.0);
    }

    #[test]
    fn jaccard_agent_sets() {
        let mut agents = BTreeMap::new();
        agents.insert(
            "Alice".to_string(),
            ["apple", "pear"].iter().map(|s| s.to_string()).collect(),
        );
        agents.insert(
            "Bob".to_string(),
            ["banana"].iter().map(|s| s.to_string()).collect(),
        );
        let reference = Answer::AgentSets(agents);
        assert_eq!(
            jaccard(&reference, "Alice: apple, pear; Bob: banana").value,
            1.0
        );
        // One agent perfect, the other missing entirely.
        let partial = jaccard(&reference, "Alice: apple, pear");
        assert_eq!(partial.value, 0.5);
        assert!(partial.extraction_note.is_some());
        // Canonical rendering of an empty section parses back as empty.
        let mut with_empty = BTreeMap::new();
        with_empty.insert("Alice".to_string(), BTreeSet::from(["apple".to_string()]));
        with_empty.insert("Bob".to_string(), BTreeSet::new());
        let reference = Answer::AgentSets(with_empty);
        assert_eq!(jaccard(&reference, &reference.canonical_text()).value, 1.0);
    }
}
