//! Stateful processing: running-quantity and running-set tracking over a
//! rendered operation sequence, plus the fold oracles the tests replay.

use std::collections::BTreeSet;

use rand::Rng;

use crate::corpus::{Seed, Vocabulary};
use crate::snapshot::{Answer, GenParams};

use super::{require, CaseParts, GenError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantityOp {
    Add(i64),
    Subtract(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetOp {
    Add(Vec<String>),
    Remove(Vec<String>),
}

/// Left-fold a quantity op sequence.
pub fn simulate_quantity(ops: &[QuantityOp], initial: i64) -> i64 {
    ops.iter().fold(initial, |acc, op| match op {
        QuantityOp::Add(n) => acc + n,
        QuantityOp::Subtract(n) => acc - n,
    })
}

/// Left-fold a set op sequence. Adding a present item and removing an absent
/// item are both no-ops.
pub fn simulate_set(ops: &[SetOp], initial: &BTreeSet<String>) -> BTreeSet<String> {
    let mut state = initial.clone();
    for op in ops {
        match op {
            SetOp::Add(items) => {
                for item in items {
                    state.insert(item.clone());
                }
            }
            SetOp::Remove(items) => {
                for item in items {
                    state.remove(item);
                }
            }
        }
    }
    state
}

const QUANTITY_OPERAND_MAX: i64 = 20;

pub fn quantity_state(params: &mut GenParams, seed: &Seed) -> Result<CaseParts, GenError> {
    let steps = require(params.num_steps, "num_steps")?;
    let mut rng = seed.child("ops").rng();

    let mut ops = Vec::with_capacity(steps);
    let mut running: i64 = 0;
    for _ in 0..steps {
        // The running total never goes negative: subtraction operands are
        // capped at the current value, and a zero total forces an add.
        let subtract = running > 0 && rng.gen_bool(0.5);
        if subtract {
            let operand = rng.gen_range(1..=QUANTITY_OPERAND_MAX.min(running));
            ops.push(QuantityOp::Subtract(operand));
            running -= operand;
        } else {
            let operand = rng.gen_range(1..=QUANTITY_OPERAND_MAX);
            ops.push(QuantityOp::Add(operand));
            running += operand;
        }
    }
    debug_assert_eq!(simulate_quantity(&ops, 0), running);

    let context = ops
        .iter()
        .map(|op| match op {
            QuantityOp::Add(n) => format!("add {n} to the total"),
            QuantityOp::Subtract(n) => format!("subtract {n} from the total"),
        })
        .collect::<Vec<_>>()
        .join("; ");

    let instruction = match params.prompt_variant {
        2 => "The context lists arithmetic operations on a running total that starts at 0. \
              Determine the final result after the operations. Answer with the number only."
            .to_string(),
        _ => "The context lists arithmetic operations on a running total that starts at 0. \
              Your task is to determine the final result of the operations. Answer with the \
              number only."
            .to_string(),
    };

    Ok(CaseParts {
        context,
        instruction,
        reference: Answer::Integer(running),
    })
}

/// Step policy shared by the set tasks: two or three items per op, adds
/// forced while the set is small, removals forced near the cap, and removals
/// never empty the set.
pub(crate) fn pick_op_items(
    rng: &mut rand_chacha::ChaCha8Rng,
    current: &BTreeSet<String>,
    pool: &[String],
    cap: usize,
) -> SetOp {
    let size = current.len();
    let add = if size >= cap.saturating_sub(1) {
        false
    } else if size <= 2 {
        true
    } else {
        rng.gen_bool(0.5)
    };
    let want = rng.gen_range(2..=3usize);
    if add {
        let available: Vec<&String> = pool.iter().filter(|w| !current.contains(*w)).collect();
        let n = want.min(cap - size).min(available.len());
        let picks = rand::seq::index::sample(rng, available.len(), n);
        SetOp::Add(picks.iter().map(|i| available[i].clone()).collect())
    } else {
        let members: Vec<&String> = current.iter().collect();
        let n = want.min(size - 1);
        let picks = rand::seq::index::sample(rng, members.len(), n);
        SetOp::Remove(picks.iter().map(|i| members[i].clone()).collect())
    }
}

pub fn set_state(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let steps = require(params.num_steps, "num_steps")?;
    let cap = require(params.set_size, "set_size")?;
    if cap < 5 {
        return Err(GenError::Invalid(format!(
            "set_size {cap} too small for the step policy (need >= 5)"
        )));
    }

    let mut sampler = vocab.sampler(seed.child("items").rng());
    let pool = sampler.take(2 * cap + 8)?;
    let mut rng = seed.child("ops").rng();

    let mut ops: Vec<SetOp> = Vec::with_capacity(steps);
    let mut current: BTreeSet<String> = BTreeSet::new();
    for _ in 0..steps {
        let op = pick_op_items(&mut rng, &current, &pool, cap);
        match &op {
            SetOp::Add(items) => current.extend(items.iter().cloned()),
            SetOp::Remove(items) => {
                for item in items {
                    current.remove(item);
                }
            }
        }
        debug_assert!(current.len() <= cap);
        debug_assert!(!current.is_empty());
        ops.push(op);
    }
    debug_assert_eq!(simulate_set(&ops, &BTreeSet::new()), current);

    let context = ops
        .iter()
        .enumerate()
        .map(|(i, op)| match op {
            SetOp::Add(items) => {
                format!(
                    "Step {}: add {} to the current set",
                    i + 1,
                    items.join(", ")
                )
            }
            SetOp::Remove(items) => {
                format!(
                    "Step {}: remove {} from the current set",
                    i + 1,
                    items.join(", ")
                )
            }
        })
        .collect::<Vec<_>>()
        .join("; ");

    Ok(CaseParts {
        context,
        instruction: "The context lists operations on a set of items, starting from an empty \
                      set. Apply every step in order and report the items in the final set, \
                      separated by commas."
            .to_string(),
        reference: Answer::WordSet(current),
    })
}
