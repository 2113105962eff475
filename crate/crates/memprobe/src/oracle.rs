//! Independent reference recomputation. Every function here reads only the
//! rendered context and instruction of a case — never the generator's
//! bookkeeping — and rebuilds the expected answer from scratch. Agreement
//! with the stored reference is the harness's core soundness check.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use regex::Regex;
use thiserror::Error;

use crate::snapshot::{Answer, Task, TestCase};
use crate::tasks::composite::{simulate_agents, AgentOp, AgentStep};
use crate::tasks::stateful::{simulate_quantity, simulate_set, QuantityOp, SetOp};

macro_rules! re {
    ($pat:expr) => {{
        static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
        RE.get_or_init(|| Regex::new($pat).expect("static regex compiles"))
    }};
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{task}: cannot parse {what}")]
    Parse { task: Task, what: &'static str },
    #[error("{task}: {detail}")]
    Inconsistent { task: Task, detail: String },
}

#[derive(Debug, Error)]
#[error("case {id}: oracle disagrees with stored reference\n  stored:   {stored:?}\n  computed: {computed:?}")]
pub struct OracleMismatch {
    pub id: String,
    pub stored: Answer,
    pub computed: Answer,
}

/// Recompute the reference for a case from its rendered text alone.
pub fn recompute_reference(
    task: Task,
    context: &str,
    instruction: &str,
) -> Result<Answer, OracleError> {
    match task {
        Task::StringSearchWord => string_search_word(context, instruction),
        Task::StringSearchSeq => string_search_seq(context, instruction),
        Task::KeyValueSearch => key_value_search(context, instruction),
        Task::BatchSearch => batch_search(context, instruction),
        Task::SnapshotWords | Task::SnapshotNumbers => Ok(Answer::Text(context.to_string())),
        Task::ReplaceAll => replace_all(context, instruction),
        Task::OverwritePositions => overwrite_positions(context, instruction),
        Task::FunctionalUpdates => functional_updates(context, instruction),
        Task::ComparePositions => compare_positions(context, instruction),
        Task::FindDuplicates => find_duplicates(context),
        Task::Count => count(context, instruction),
        Task::CheckAssociation => check_association(context, instruction),
        Task::CompareTwoLists => compare_two_lists(context, instruction),
        Task::IdentifyOddGroup => identify_odd_group(context),
        Task::PatchDifference => patch_difference(context, instruction),
        Task::GroupMembership => group_membership(context, instruction),
        Task::GroupAssociation | Task::GroupAssociationAlternating => {
            group_association(context, instruction, task)
        }
        Task::Iterate => iterate(context, instruction),
        Task::QuantityState => quantity_state(context),
        Task::SetState => set_state(context),
        Task::DataBlocks => data_blocks(context, instruction),
        Task::TheoryOfMind => theory_of_mind(context),
    }
}

/// Check one case against its oracle.
pub fn verify_case(case: &TestCase) -> Result<(), Box<OracleMismatch>> {
    let computed = match recompute_reference(case.task, &case.context_text, &case.instruction_text)
    {
        Ok(answer) => answer,
        Err(err) => {
            return Err(Box::new(OracleMismatch {
                id: case.id.clone(),
                stored: case.reference.clone(),
                computed: Answer::Text(format!("<oracle error: {err}>")),
            }))
        }
    };
    if computed == case.reference {
        Ok(())
    } else {
        Err(Box::new(OracleMismatch {
            id: case.id.clone(),
            stored: case.reference.clone(),
            computed,
        }))
    }
}

fn quoted_slots(instruction: &str) -> Vec<&str> {
    instruction.split('"').skip(1).step_by(2).collect()
}

fn one_quoted(task: Task, instruction: &str) -> Result<&str, OracleError> {
    quoted_slots(instruction)
        .first()
        .copied()
        .ok_or(OracleError::Parse {
            task,
            what: "quoted query",
        })
}

fn two_quoted(task: Task, instruction: &str) -> Result<(&str, &str), OracleError> {
    let slots = quoted_slots(instruction);
    match slots.as_slice() {
        [a, b, ..] => Ok((a, b)),
        _ => Err(OracleError::Parse {
            task,
            what: "two quoted queries",
        }),
    }
}

fn string_search_word(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let query = one_quoted(Task::StringSearchWord, instruction)?;
    let present = context.split_whitespace().any(|w| w == query);
    Ok(Answer::Binary(present))
}

fn string_search_seq(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let query: Vec<&str> = one_quoted(Task::StringSearchSeq, instruction)?
        .split_whitespace()
        .collect();
    let words: Vec<&str> = context.split_whitespace().collect();
    let present = !query.is_empty()
        && words.len() >= query.len()
        && words.windows(query.len()).any(|w| w == query.as_slice());
    Ok(Answer::Binary(present))
}

fn parse_pairs(task: Task, context: &str) -> Result<Vec<(&str, &str)>, OracleError> {
    context
        .split(", ")
        .map(|entry| {
            entry.split_once(": ").ok_or(OracleError::Parse {
                task,
                what: "key: value entry",
            })
        })
        .collect()
}

fn key_value_search(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let key = one_quoted(Task::KeyValueSearch, instruction)?;
    let pairs = parse_pairs(Task::KeyValueSearch, context)?;
    pairs
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| Answer::Text(v.to_string()))
        .ok_or(OracleError::Inconsistent {
            task: Task::KeyValueSearch,
            detail: format!("key {key} not found"),
        })
}

fn batch_search(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let keys = quoted_slots(instruction);
    if keys.is_empty() {
        return Err(OracleError::Parse {
            task: Task::BatchSearch,
            what: "quoted key list",
        });
    }
    let pairs = parse_pairs(Task::BatchSearch, context)?;
    let lookup: HashMap<&str, &str> = pairs.iter().copied().collect();
    let values = keys
        .iter()
        .map(|k| {
            lookup
                .get(k)
                .map(|v| v.to_string())
                .ok_or(OracleError::Inconsistent {
                    task: Task::BatchSearch,
                    detail: format!("key {k} not found"),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Answer::OrderedList(values))
}

fn replace_all(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let slots = quoted_slots(instruction);
    let delete = instruction.contains("delete all occurrences");
    let words = context.split_whitespace();
    let edited: Vec<&str> = match (delete, slots.as_slice()) {
        (true, [x, ..]) => words.filter(|w| w != x).collect(),
        (false, [x, y, ..]) => words.map(|w| if w == *x { *y } else { w }).collect(),
        _ => {
            return Err(OracleError::Parse {
                task: Task::ReplaceAll,
                what: "replacement slots",
            })
        }
    };
    Ok(Answer::Text(edited.join(" ")))
}

fn overwrite_positions(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let nth: usize = re!(r"every (\d+)(?:st|nd|rd|th) word")
        .captures(instruction)
        .and_then(|c| c[1].parse().ok())
        .ok_or(OracleError::Parse {
            task: Task::OverwritePositions,
            what: "position interval",
        })?;
    let delete = instruction.contains("deleting every");
    let substitute = if delete {
        None
    } else {
        Some(one_quoted(Task::OverwritePositions, instruction)?)
    };
    let edited: Vec<&str> = context
        .split_whitespace()
        .enumerate()
        .filter_map(|(i, w)| {
            if (i + 1) % nth == 0 {
                substitute
            } else {
                Some(w)
            }
        })
        .collect();
    Ok(Answer::Text(edited.join(" ")))
}

fn functional_updates(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let (op, operand): (fn(i64, i64) -> i64, i64) =
        if let Some(c) = re!(r"adding (\d+) to every number").captures(instruction) {
            (|x, k| x + k, c[1].parse().unwrap())
        } else if let Some(c) = re!(r"subtracting (\d+) from every number").captures(instruction) {
            (|x, k| x - k, c[1].parse().unwrap())
        } else if let Some(c) = re!(r"multiplying every number by (\d+)").captures(instruction) {
            (|x, k| x * k, c[1].parse().unwrap())
        } else {
            return Err(OracleError::Parse {
                task: Task::FunctionalUpdates,
                what: "update function",
            });
        };
    let updated = context
        .split_whitespace()
        .map(|t| {
            t.parse::<i64>()
                .map(|x| op(x, operand).to_string())
                .map_err(|_| OracleError::Parse {
                    task: Task::FunctionalUpdates,
                    what: "numeric context token",
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Answer::Text(updated.join(" ")))
}

fn compare_positions(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let (x, y) = two_quoted(Task::ComparePositions, instruction)?;
    let words: Vec<&str> = context.split_whitespace().collect();
    let find = |target: &str| {
        words
            .iter()
            .position(|w| *w == target)
            .ok_or(OracleError::Inconsistent {
                task: Task::ComparePositions,
                detail: format!("{target} not in context"),
            })
    };
    Ok(Answer::Binary(find(x)? < find(y)?))
}

fn find_duplicates(context: &str) -> Result<Answer, OracleError> {
    let mut histogram: HashMap<&str, usize> = HashMap::new();
    for w in context.split_whitespace() {
        *histogram.entry(w).or_default() += 1;
    }
    let duplicated: Vec<&str> = histogram
        .iter()
        .filter(|(_, &c)| c > 1)
        .map(|(w, _)| *w)
        .collect();
    match duplicated.as_slice() {
        [one] => Ok(Answer::Text(one.to_string())),
        _ => Err(OracleError::Inconsistent {
            task: Task::FindDuplicates,
            detail: format!("{} duplicated words", duplicated.len()),
        }),
    }
}

fn count(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let target = one_quoted(Task::Count, instruction)?;
    let n = context.split_whitespace().filter(|w| *w == target).count();
    Ok(Answer::Integer(n as i64))
}

fn check_association(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let (x, y) = two_quoted(Task::CheckAssociation, instruction)?;
    let pairs = parse_pairs(Task::CheckAssociation, context)?;
    let tag_of = |target: &str| {
        pairs
            .iter()
            .find(|(w, _)| *w == target)
            .map(|(_, t)| *t)
            .ok_or(OracleError::Inconsistent {
                task: Task::CheckAssociation,
                detail: format!("{target} not tagged in context"),
            })
    };
    Ok(Answer::Binary(tag_of(x)? == tag_of(y)?))
}

fn parse_segments(task: Task, context: &str) -> Result<Vec<(&str, Vec<&str>)>, OracleError> {
    context
        .split("; ")
        .map(|seg| {
            seg.split_once(": ")
                .map(|(label, members)| (label, members.split(", ").collect()))
                .ok_or(OracleError::Parse {
                    task,
                    what: "labeled segment",
                })
        })
        .collect()
}

/// Merge segments by label, preserving first-appearance order.
fn merge_by_label<'c>(segments: Vec<(&'c str, Vec<&'c str>)>) -> Vec<(&'c str, Vec<&'c str>)> {
    let mut order: Vec<&str> = Vec::new();
    let mut merged: HashMap<&str, Vec<&str>> = HashMap::new();
    for (label, members) in segments {
        if !merged.contains_key(label) {
            order.push(label);
        }
        merged.entry(label).or_default().extend(members);
    }
    order
        .into_iter()
        .map(|label| {
            let members = merged.remove(label).expect("label recorded");
            (label, members)
        })
        .collect()
}

fn compare_two_lists(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let caps = re!(r"in list (\w+) but not in list (\w+)")
        .captures(instruction)
        .ok_or(OracleError::Parse {
            task: Task::CompareTwoLists,
            what: "chosen list",
        })?;
    let (chosen, other) = (caps.get(1).unwrap().as_str(), caps.get(2).unwrap().as_str());
    let lists: HashMap<&str, Vec<&str>> = parse_segments(Task::CompareTwoLists, context)?
        .into_iter()
        .collect();
    let from = lists.get(chosen).ok_or(OracleError::Inconsistent {
        task: Task::CompareTwoLists,
        detail: format!("list {chosen} missing"),
    })?;
    let against: BTreeSet<&str> = lists
        .get(other)
        .ok_or(OracleError::Inconsistent {
            task: Task::CompareTwoLists,
            detail: format!("list {other} missing"),
        })?
        .iter()
        .copied()
        .collect();
    let difference: Vec<String> = from
        .iter()
        .filter(|w| !against.contains(*w))
        .map(|w| w.to_string())
        .collect();
    Ok(Answer::OrderedList(difference))
}

fn identify_odd_group(context: &str) -> Result<Answer, OracleError> {
    let segments = parse_segments(Task::IdentifyOddGroup, context)?;
    let mut classes: HashMap<Vec<&str>, Vec<usize>> = HashMap::new();
    for (i, (_, members)) in segments.iter().enumerate() {
        let mut key = members.clone();
        key.sort_unstable();
        classes.entry(key).or_default().push(i);
    }
    match classes.len() {
        1 => Ok(Answer::Text("none".to_string())),
        2 => {
            let minority: Vec<&Vec<usize>> =
                classes.values().filter(|idxs| idxs.len() == 1).collect();
            match minority.as_slice() {
                [only] => Ok(Answer::Text(segments[only[0]].0.to_string())),
                _ => Err(OracleError::Inconsistent {
                    task: Task::IdentifyOddGroup,
                    detail: "no unique odd group".to_string(),
                }),
            }
        }
        n => Err(OracleError::Inconsistent {
            task: Task::IdentifyOddGroup,
            detail: format!("{n} distinct group multisets"),
        }),
    }
}

fn patch_difference(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let nth: usize = re!(r"the (\d+)(?:st|nd|rd|th) next element")
        .captures(instruction)
        .and_then(|c| c[1].parse().ok())
        .ok_or(OracleError::Parse {
            task: Task::PatchDifference,
            what: "element offset",
        })?;
    let words: Vec<&str> = context.split_whitespace().collect();
    let period = (1..=words.len())
        .find(|&p| (p..words.len()).all(|i| words[i] == words[i % p]))
        .expect("full length is always a period");
    Ok(Answer::Text(
        words[(words.len() + nth - 1) % period].to_string(),
    ))
}

fn group_membership(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let query = one_quoted(Task::GroupMembership, instruction)?;
    let merged = merge_by_label(parse_segments(Task::GroupMembership, context)?);
    merged
        .iter()
        .find(|(_, members)| members.contains(&query))
        .map(|(label, _)| Answer::Text(label.to_string()))
        .ok_or(OracleError::Inconsistent {
            task: Task::GroupMembership,
            detail: format!("{query} not in any set"),
        })
}

fn group_association(context: &str, instruction: &str, task: Task) -> Result<Answer, OracleError> {
    let (x, y) = two_quoted(task, instruction)?;
    let merged = merge_by_label(parse_segments(task, context)?);
    let owner = |target: &str| {
        merged
            .iter()
            .position(|(_, members)| members.contains(&target))
            .ok_or(OracleError::Inconsistent {
                task,
                detail: format!("{target} not in any set"),
            })
    };
    Ok(Answer::Binary(owner(x)? == owner(y)?))
}

fn iterate(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let take_first = instruction.contains("first element");
    let merged = merge_by_label(parse_segments(Task::Iterate, context)?);
    let picked = merged
        .iter()
        .map(|(_, members)| {
            let m = if take_first {
                members.first()
            } else {
                members.last()
            };
            m.map(|w| w.to_string()).ok_or(OracleError::Inconsistent {
                task: Task::Iterate,
                detail: "empty list".to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Answer::OrderedList(picked))
}

fn quantity_state(context: &str) -> Result<Answer, OracleError> {
    let ops = context
        .split("; ")
        .map(|step| {
            let parse = |rest: &str| {
                rest.split_whitespace()
                    .next()
                    .and_then(|t| t.parse::<i64>().ok())
            };
            if let Some(rest) = step.strip_prefix("add ") {
                parse(rest).map(QuantityOp::Add)
            } else if let Some(rest) = step.strip_prefix("subtract ") {
                parse(rest).map(QuantityOp::Subtract)
            } else {
                None
            }
            .ok_or(OracleError::Parse {
                task: Task::QuantityState,
                what: "arithmetic step",
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Answer::Integer(simulate_quantity(&ops, 0)))
}

fn set_state(context: &str) -> Result<Answer, OracleError> {
    let ops = context
        .split("; ")
        .map(|step| {
            let rest = step.split_once(": ").map(|(_, r)| r).unwrap_or(step);
            if let Some(items) = rest
                .strip_prefix("add ")
                .and_then(|r| r.strip_suffix(" to the current set"))
            {
                Ok(SetOp::Add(items.split(", ").map(str::to_string).collect()))
            } else if let Some(items) = rest
                .strip_prefix("remove ")
                .and_then(|r| r.strip_suffix(" from the current set"))
            {
                Ok(SetOp::Remove(
                    items.split(", ").map(str::to_string).collect(),
                ))
            } else {
                Err(OracleError::Parse {
                    task: Task::SetState,
                    what: "set operation step",
                })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Answer::WordSet(simulate_set(&ops, &BTreeSet::new())))
}

fn data_blocks(context: &str, instruction: &str) -> Result<Answer, OracleError> {
    let label = re!(r"In list (\w+),")
        .captures(instruction)
        .map(|c| c.get(1).unwrap().as_str())
        .ok_or(OracleError::Parse {
            task: Task::DataBlocks,
            what: "query list label",
        })?;
    let element = one_quoted(Task::DataBlocks, instruction)?;
    let merged = merge_by_label(parse_segments(Task::DataBlocks, context)?);
    let list = merged
        .iter()
        .find(|(l, _)| *l == label)
        .map(|(_, members)| members)
        .ok_or(OracleError::Inconsistent {
            task: Task::DataBlocks,
            detail: format!("list {label} missing"),
        })?;
    let at = list
        .iter()
        .position(|w| *w == element)
        .ok_or(OracleError::Inconsistent {
            task: Task::DataBlocks,
            detail: format!("element {element} not in list {label}"),
        })?;
    Ok(Answer::OrderedList(
        list[at + 1..].iter().map(|w| w.to_string()).collect(),
    ))
}

fn theory_of_mind(context: &str) -> Result<Answer, OracleError> {
    let swap_re = re!(r"^swaps (\S+) with (\S+) for (\S+)$");
    let mut agents: Vec<String> = Vec::new();
    let mut steps: Vec<AgentStep> = Vec::new();
    for step in context.split("; ") {
        let rest = step.split_once(": ").map(|(_, r)| r).unwrap_or(step);
        let (name, action) = rest.split_once(' ').ok_or(OracleError::Parse {
            task: Task::TheoryOfMind,
            what: "agent action",
        })?;
        if !agents.iter().any(|a| a == name) {
            agents.push(name.to_string());
        }
        let op = if let Some(items) = action
            .strip_prefix("adds ")
            .and_then(|r| r.strip_suffix(" to their set"))
        {
            AgentOp::Add(items.split(", ").map(str::to_string).collect())
        } else if let Some(items) = action
            .strip_prefix("removes ")
            .and_then(|r| r.strip_suffix(" from their set"))
        {
            AgentOp::Remove(items.split(", ").map(str::to_string).collect())
        } else if let Some(caps) = swap_re.captures(action) {
            AgentOp::Swap {
                give: caps[1].to_string(),
                counterpart: caps[2].to_string(),
                receive: caps[3].to_string(),
            }
        } else {
            return Err(OracleError::Parse {
                task: Task::TheoryOfMind,
                what: "agent operation",
            });
        };
        steps.push((name.to_string(), op));
    }
    let state = simulate_agents(&agents, &steps).map_err(|e| OracleError::Inconsistent {
        task: Task::TheoryOfMind,
        detail: e.to_string(),
    })?;
    Ok(Answer::AgentSets(
        state.into_iter().collect::<BTreeMap<_, _>>(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_blocks_worked_example() {
        // Interleaved segments of the same list concatenate before the
        // suffix is taken.
        let context = "L1: a, b, c; L2: h, f, i; L1: d, z, k";
        let instruction = "The context contains alternating labeled lists. In list L1, find \
                           the element \"b\" and return all elements that appear after it in \
                           that list, in order, separated by commas.";
        let answer = data_blocks(context, instruction).unwrap();
        assert_eq!(
            answer,
            Answer::OrderedList(vec![
                "c".to_string(),
                "d".to_string(),
                "z".to_string(),
                "k".to_string()
            ])
        );
    }

    #[test]
    fn quantity_worked_example() {
        let context = "add 10 to the total; subtract 2 from the total; add 7 to the total";
        assert_eq!(quantity_state(context).unwrap(), Answer::Integer(15));
    }

    #[test]
    fn set_state_worked_example() {
        let context = "Step 1: add apple, pear to the current set; \
                       Step 2: add orange to the current set; \
                       Step 3: remove apple from the current set; \
                       Step 4: add lime to the current set";
        let expect: BTreeSet<String> = ["pear", "orange", "lime"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(set_state(context).unwrap(), Answer::WordSet(expect));
    }

    #[test]
    fn theory_of_mind_swap_example() {
        let context = "Step 1: Alice adds apple, pear to their set; \
                       Step 2: Bob adds banana to their set; \
                       Step 3: Alice swaps pear with Bob for banana";
        let Answer::AgentSets(state) = theory_of_mind(context).unwrap() else {
            panic!()
        };
        assert_eq!(
            state["Alice"],
            ["apple", "banana"].iter().map(|s| s.to_string()).collect()
        );
        assert_eq!(
            state["Bob"],
            ["pear"].iter().map(|s| s.to_string()).collect()
        );
    }

    #[test]
    fn patch_period_detection() {
        let context = "red blue lime red blue lime red";
        let instruction = "What is the 1st next element that continues the sequence?";
        assert_eq!(
            patch_difference(context, instruction).unwrap(),
            Answer::Text("blue".to_string())
        );
        let instruction = "What is the 3rd next element that continues the sequence?";
        assert_eq!(
            patch_difference(context, instruction).unwrap(),
            Answer::Text("red".to_string())
        );
    }

    #[test]
    fn odd_group_majority_vote() {
        let context = "G1: a, b; G2: b, a; G3: a, q";
        assert_eq!(
            identify_odd_group(context).unwrap(),
            Answer::Text("G3".to_string())
        );
        let context = "G1: a, b; G2: b, a; G3: a, b";
        assert_eq!(
            identify_odd_group(context).unwrap(),
            Answer::Text("none".to_string())
        );
    }
}
