//! Composite probes: suffix queries over interleaved labeled blocks, and
//! multi-agent set tracking with item swaps.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use crate::corpus::{Seed, Vocabulary};
use crate::snapshot::{Answer, GenParams};

use super::sets_lists::build_groups;
use super::{quoted, require, CaseParts, GenError};

/// Agent names in roster order; a case with `k` agents uses the first `k`.
pub const AGENT_NAMES: [&str; 4] = ["Alice", "Bob", "Charley", "Dana"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentOp {
    Add(Vec<String>),
    Remove(Vec<String>),
    /// The acting agent hands `give` to `counterpart` and receives `receive`.
    Swap {
        give: String,
        counterpart: String,
        receive: String,
    },
}

/// One scripted action: which agent acts, and what they do.
pub type AgentStep = (String, AgentOp);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid swap at step {step}: {detail}")]
pub struct InvalidSwap {
    pub step: usize,
    pub detail: String,
}

/// Replay a script from empty per-agent sets. Add of a present item and
/// remove of an absent item are no-ops; a swap must reference items both
/// parties actually hold.
pub fn simulate_agents(
    agents: &[String],
    steps: &[AgentStep],
) -> Result<BTreeMap<String, BTreeSet<String>>, InvalidSwap> {
    let mut state: BTreeMap<String, BTreeSet<String>> = agents
        .iter()
        .map(|name| (name.clone(), BTreeSet::new()))
        .collect();
    for (i, (agent, op)) in steps.iter().enumerate() {
        match op {
            AgentOp::Add(items) => {
                let set = state.entry(agent.clone()).or_default();
                set.extend(items.iter().cloned());
            }
            AgentOp::Remove(items) => {
                let set = state.entry(agent.clone()).or_default();
                for item in items {
                    set.remove(item);
                }
            }
            AgentOp::Swap {
                give,
                counterpart,
                receive,
            } => {
                let holds_give = state.get(agent).is_some_and(|s| s.contains(give));
                let holds_receive = state.get(counterpart).is_some_and(|s| s.contains(receive));
                if !holds_give {
                    return Err(InvalidSwap {
                        step: i,
                        detail: format!("{agent} does not hold {give}"),
                    });
                }
                if !holds_receive {
                    return Err(InvalidSwap {
                        step: i,
                        detail: format!("{counterpart} does not hold {receive}"),
                    });
                }
                let giver = state.get_mut(agent).expect("giver exists");
                giver.remove(give);
                giver.insert(receive.clone());
                let other = state.get_mut(counterpart).expect("counterpart exists");
                other.remove(receive);
                other.insert(give.clone());
            }
        }
    }
    Ok(state)
}

pub fn data_blocks(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let k = require(params.num_blocks, "num_blocks")?;
    let turns = require(params.num_turns, "num_turns")?;

    // Reuse the grouped-context builder with list labels; two members per
    // label minimum so the query element is never the last one.
    let grouped = {
        let mut proxy = params.clone();
        proxy.num_groups = Some(k);
        build_groups("L", k, 2, turns, &proxy, vocab, seed)?
    };
    params.num_turns = Some(grouped.turns);

    let mut pick_rng = seed.child("query").rng();
    let block = pick_rng.gen_range(0..k);
    let list = &grouped.groups[block];
    let at = pick_rng.gen_range(0..list.len() - 1);
    let element = list[at].clone();
    let suffix: Vec<String> = list[at + 1..].to_vec();

    let instruction = format!(
        "The context contains alternating labeled lists. In list {}, find the element {} \
         and return all elements that appear after it in that list, in order, separated \
         by commas.",
        grouped.labels[block],
        quoted(&element)
    );

    Ok(CaseParts {
        context: grouped.render(),
        instruction,
        reference: Answer::OrderedList(suffix),
    })
}

pub fn theory_of_mind(
    params: &mut GenParams,
    vocab: &Vocabulary,
    seed: &Seed,
) -> Result<CaseParts, GenError> {
    let steps = require(params.num_steps, "num_steps")?;
    let k = require(params.num_agents, "num_agents")?;
    let cap = require(params.set_size, "set_size")?;
    if !(1..=AGENT_NAMES.len()).contains(&k) {
        return Err(GenError::Invalid(format!(
            "num_agents {k} outside the {}-name roster",
            AGENT_NAMES.len()
        )));
    }
    if steps < k {
        return Err(GenError::Invalid(format!(
            "num_steps {steps} cannot introduce {k} agents"
        )));
    }

    let agents: Vec<String> = AGENT_NAMES[..k].iter().map(|s| s.to_string()).collect();
    let mut sampler = vocab.sampler(seed.child("items").rng());
    let pool = sampler.take(k * cap + 20)?;
    let mut rng = seed.child("ops").rng();

    let mut state: BTreeMap<String, BTreeSet<String>> = agents
        .iter()
        .map(|name| (name.clone(), BTreeSet::new()))
        .collect();
    let mut script: Vec<AgentStep> = Vec::with_capacity(steps);

    for step in 0..steps {
        // The first k steps introduce each agent with an add, so every agent
        // holds items before swaps come into play.
        let agent = if step < k {
            agents[step].clone()
        } else {
            agents[rng.gen_range(0..k)].clone()
        };
        let current = state[&agent].clone();
        let size = current.len();
        // Holdings stay disjoint across agents: an item belongs to at most
        // one of them, so a swap is a genuine ownership transfer and the
        // combined item pool is conserved.
        let held_by_any: BTreeSet<String> = state.values().flatten().cloned().collect();

        let op = if size == 0 || size <= 2 {
            add_op(&mut rng, &held_by_any, &pool, cap - size)
        } else {
            let roll: f64 = rng.gen();
            let swap_ok = step >= k;
            if size >= cap.saturating_sub(1) {
                if swap_ok && roll < 0.5 {
                    swap_op(&mut rng, &agent, &agents, &state)
                        .unwrap_or_else(|| remove_op(&mut rng, &current))
                } else {
                    remove_op(&mut rng, &current)
                }
            } else if roll < 0.35 {
                add_op(&mut rng, &held_by_any, &pool, cap - size)
            } else if roll < 0.7 {
                remove_op(&mut rng, &current)
            } else if swap_ok {
                swap_op(&mut rng, &agent, &agents, &state)
                    .unwrap_or_else(|| add_op(&mut rng, &held_by_any, &pool, cap - size))
            } else {
                add_op(&mut rng, &held_by_any, &pool, cap - size)
            }
        };

        apply(&mut state, &agent, &op);
        debug_assert!(state.values().all(|s| s.len() <= cap));
        script.push((agent, op));
    }

    let reference =
        simulate_agents(&agents, &script).expect("generated scripts only contain valid swaps");
    debug_assert_eq!(reference, state);

    let context = script
        .iter()
        .enumerate()
        .map(|(i, (agent, op))| {
            let n = i + 1;
            match op {
                AgentOp::Add(items) => {
                    format!("Step {n}: {agent} adds {} to their set", items.join(", "))
                }
                AgentOp::Remove(items) => {
                    format!(
                        "Step {n}: {agent} removes {} from their set",
                        items.join(", ")
                    )
                }
                AgentOp::Swap {
                    give,
                    counterpart,
                    receive,
                } => format!("Step {n}: {agent} swaps {give} with {counterpart} for {receive}"),
            }
        })
        .collect::<Vec<_>>()
        .join("; ");

    Ok(CaseParts {
        context,
        instruction: "The context lists operations performed by agents on their own sets of \
                      items, all starting empty. A swap trades the named item from one agent \
                      for the named item of the other. Report the final set of items for each \
                      agent, in the format \"Name: item, item; Name: item\"."
            .to_string(),
        reference: Answer::AgentSets(reference),
    })
}

fn add_op(
    rng: &mut rand_chacha::ChaCha8Rng,
    held_by_any: &BTreeSet<String>,
    pool: &[String],
    room: usize,
) -> AgentOp {
    let available: Vec<&String> = pool.iter().filter(|w| !held_by_any.contains(*w)).collect();
    let want = rng.gen_range(2..=3usize);
    let n = want.min(room).min(available.len()).max(1);
    let picks = rand::seq::index::sample(rng, available.len(), n);
    AgentOp::Add(picks.iter().map(|i| available[i].clone()).collect())
}

fn remove_op(rng: &mut rand_chacha::ChaCha8Rng, current: &BTreeSet<String>) -> AgentOp {
    let members: Vec<&String> = current.iter().collect();
    let want = rng.gen_range(2..=3usize);
    let n = want.min(members.len() - 1).max(1);
    let picks = rand::seq::index::sample(rng, members.len(), n);
    AgentOp::Remove(picks.iter().map(|i| members[i].clone()).collect())
}

fn swap_op(
    rng: &mut rand_chacha::ChaCha8Rng,
    agent: &str,
    agents: &[String],
    state: &BTreeMap<String, BTreeSet<String>>,
) -> Option<AgentOp> {
    let mine = &state[agent];
    if mine.is_empty() {
        return None;
    }
    let others: Vec<&String> = agents
        .iter()
        .filter(|name| name.as_str() != agent && !state[*name].is_empty())
        .collect();
    if others.is_empty() {
        return None;
    }
    let counterpart = others[rng.gen_range(0..others.len())].clone();
    let my_items: Vec<&String> = mine.iter().collect();
    let give = my_items[rng.gen_range(0..my_items.len())].clone();
    let their_items: Vec<&String> = state[&counterpart].iter().filter(|w| **w != give).collect();
    if their_items.is_empty() {
        return None;
    }
    let receive = their_items[rng.gen_range(0..their_items.len())].clone();
    Some(AgentOp::Swap {
        give,
        counterpart,
        receive,
    })
}

fn apply(state: &mut BTreeMap<String, BTreeSet<String>>, agent: &str, op: &AgentOp) {
    match op {
        AgentOp::Add(items) => {
            state.get_mut(agent).unwrap().extend(items.iter().cloned());
        }
        AgentOp::Remove(items) => {
            let set = state.get_mut(agent).unwrap();
            for item in items {
                set.remove(item);
            }
        }
        AgentOp::Swap {
            give,
            counterpart,
            receive,
        } => {
            let giver = state.get_mut(agent).unwrap();
            giver.remove(give);
            giver.insert(receive.clone());
            let other = state.get_mut(counterpart).unwrap();
            other.remove(receive);
            other.insert(give.clone());
        }
    }
}
